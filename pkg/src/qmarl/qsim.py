"""Exact, noiseless statevector simulation.

Qubit ordering is little-endian: qubit ``k`` is bit ``k`` of the basis-state
index, so ``|q1 q0> = |10>`` lives at index 1 when ``q0 = 1``.

Two layers live here.  The value-level API (:class:`Statevector`,
:func:`apply_gate`, :class:`CircuitSpec` ...) is what the CHSH agents and the
tests use.  The array-level kernels (:func:`apply_single`,
:func:`apply_cnot`, :func:`rotation`) act on batches of raw amplitude arrays
of shape ``(batch, 2**n)`` and back the variational circuits in
:mod:`qmarl.policies.vqc`.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateOutcomeError

MAX_QUBITS = 12

# Stored rotation parameters enter gates as ``2 * theta``; shifting theta by
# pi/4 is then the usual +-pi/2 shift on the gate angle.
ANGLE_SCALE = 2.0
PARAM_SHIFT = np.pi / 4

MIN_OUTCOME_PROB = 1e-12

_SQRT1_2 = 1.0 / np.sqrt(2.0)

PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
FIXED_GATES = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT1_2,
    "X": PAULI["X"],
    "Z": PAULI["Z"],
}
ROTATIONS = ("RX", "RY", "RZ")


class Entanglement(str, enum.Enum):
    """Shared resource state prepared before the agents act."""

    PHI_PLUS = "phi_plus"
    PHI_MINUS = "phi_minus"
    PSI_PLUS = "psi_plus"
    PSI_MINUS = "psi_minus"
    GHZ = "ghz"
    PRODUCT = "product"

    @property
    def is_bell(self):
        return self in _BELL

    @property
    def is_entangled(self):
        return self is not Entanglement.PRODUCT


_BELL = frozenset(
    {Entanglement.PHI_PLUS, Entanglement.PHI_MINUS, Entanglement.PSI_PLUS, Entanglement.PSI_MINUS}
)


def _check_qubits(n_qubits):
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")


@dataclass(frozen=True)
class Statevector:
    """Immutable joint state of ``n_qubits`` qubits."""

    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_qubits(self.n_qubits)
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2**self.n_qubits:
            raise ValueError(
                f"expected {2 ** self.n_qubits} amplitudes for {self.n_qubits} qubits, got {amps.size}"
            )
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, n_qubits):
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @property
    def norm_squared(self):
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def __len__(self):
        return self.amplitudes.size


@dataclass(frozen=True)
class GateOp:
    """One gate in a circuit.

    Rotation gates take their angle as ``angle + scale * params[param]`` when
    ``param`` is set, else just ``angle``.  ``control`` is only used by CNOT.
    """

    kind: str
    qubit: int
    control: int | None = None
    angle: float = 0.0
    param: int | None = None
    scale: float = ANGLE_SCALE

    def __post_init__(self):
        if self.kind not in ROTATIONS and self.kind not in FIXED_GATES and self.kind != "CNOT":
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind == "CNOT":
            if self.control is None:
                raise ValueError("CNOT needs a control qubit")
            if self.control == self.qubit:
                raise ValueError("CNOT control and target must differ")
        if self.param is not None and self.kind not in ROTATIONS:
            raise ValueError(f"{self.kind} gates cannot be parameterised")

    def resolved_angle(self, params=None):
        if self.param is None:
            return self.angle
        if params is None:
            raise ValueError("parameterised gate evaluated without a parameter vector")
        return self.angle + self.scale * params[self.param]

    def qubits(self):
        return (self.qubit,) if self.control is None else (self.control, self.qubit)


@dataclass(frozen=True)
class LocalRegister:
    """The qubits one agent is allowed to act on and measure."""

    agent_id: int
    qubit_indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "qubit_indices", tuple(int(q) for q in self.qubit_indices))


# ---------------------------------------------------------------------------
# Array kernels
# ---------------------------------------------------------------------------


def rotation(kind, angles):
    """Rotation matrices ``exp(-i angle P / 2)``.

    A scalar angle gives a ``(2, 2)`` matrix, an array of angles gives a
    stack of shape ``angles.shape + (2, 2)``.
    """
    angles = np.asarray(angles, dtype=float)
    c = np.cos(angles / 2)
    s = np.sin(angles / 2)
    out = np.empty(angles.shape + (2, 2), dtype=complex)
    if kind == "RX":
        out[..., 0, 0] = c
        out[..., 0, 1] = -1j * s
        out[..., 1, 0] = -1j * s
        out[..., 1, 1] = c
    elif kind == "RY":
        out[..., 0, 0] = c
        out[..., 0, 1] = -s
        out[..., 1, 0] = s
        out[..., 1, 1] = c
    elif kind == "RZ":
        out[..., 0, 0] = c - 1j * s
        out[..., 0, 1] = 0.0
        out[..., 1, 0] = 0.0
        out[..., 1, 1] = c + 1j * s
    else:
        raise ValueError(f"not a rotation: {kind!r}")
    return out


def apply_single(states, matrix, qubit, n_qubits):
    """Apply a one-qubit matrix to a batch of states of shape ``(B, 2**n)``.

    ``matrix`` is either a single ``(2, 2)`` matrix shared by the batch or a
    ``(B, 2, 2)`` stack with one matrix per batch row.
    """
    batch = states.shape[0]
    hi = 2 ** (n_qubits - qubit - 1)
    lo = 2**qubit
    psi = states.reshape(batch, hi, 2, lo)
    if matrix.ndim == 2:
        out = matrix @ psi
    else:
        out = matrix[:, None] @ psi
    return out.reshape(batch, -1)


@functools.lru_cache(maxsize=None)
def _cnot_permutation(control, target, n_qubits):
    idx = np.arange(2**n_qubits)
    flip = ((idx >> control) & 1).astype(bool)
    perm = idx.copy()
    perm[flip] ^= 1 << target
    perm.flags.writeable = False
    return perm


def apply_cnot(states, control, target, n_qubits):
    """CNOT on a batch of states (a basis permutation, self-inverse)."""
    return states[:, _cnot_permutation(control, target, n_qubits)]


@functools.lru_cache(maxsize=None)
def z_signs(n_qubits):
    """``(2**n, n)`` table of Z eigenvalues: +1 where bit k is 0, else -1."""
    idx = np.arange(2**n_qubits)[:, None]
    bits = (idx >> np.arange(n_qubits)[None, :]) & 1
    signs = 1.0 - 2.0 * bits
    signs.flags.writeable = False
    return signs


def _gate_matrix(op, params):
    if op.kind in ROTATIONS:
        return rotation(op.kind, op.resolved_angle(params))
    return FIXED_GATES[op.kind]


def _apply_op(amps, op, n_qubits, params=None):
    batch = amps[None, :]
    if op.kind == "CNOT":
        return apply_cnot(batch, op.control, op.qubit, n_qubits)[0]
    return apply_single(batch, _gate_matrix(op, params), op.qubit, n_qubits)[0]


# ---------------------------------------------------------------------------
# Value-level API
# ---------------------------------------------------------------------------


def apply_gate(state, op, params=None):
    """Return ``op`` applied to ``state``; the input is left untouched."""
    for q in op.qubits():
        if not 0 <= q < state.n_qubits:
            raise IndexError(f"qubit {q} out of range for {state.n_qubits}-qubit state")
    angle = op.resolved_angle(params) if op.kind in ROTATIONS else 0.0
    if not np.isfinite(angle):
        raise ValueError(f"non-finite rotation angle {angle}")
    return Statevector(state.n_qubits, _apply_op(state.amplitudes, op, state.n_qubits, params))


def preparation_ops(variant, designated):
    """Fixed H + CNOT ladder (plus Pauli corrections) for ``variant``."""
    variant = Entanglement(variant)
    designated = tuple(designated)
    if variant is Entanglement.PRODUCT:
        return ()
    if variant.is_bell:
        if len(designated) != 2:
            raise ValueError(f"{variant.value} needs exactly 2 designated qubits, got {len(designated)}")
    elif len(designated) < 3:
        raise ValueError(f"ghz needs at least 3 designated qubits, got {len(designated)}")
    if len(set(designated)) != len(designated):
        raise ValueError("designated qubits must be distinct")
    ops = [GateOp("H", designated[0])]
    ops += [GateOp("CNOT", b, control=a) for a, b in zip(designated, designated[1:])]
    second = designated[1]
    if variant in (Entanglement.PSI_PLUS, Entanglement.PSI_MINUS):
        ops.append(GateOp("X", second))
    if variant in (Entanglement.PHI_MINUS, Entanglement.PSI_MINUS):
        ops.append(GateOp("Z", second))
    return tuple(ops)


def prepare_state(n_qubits, variant, designated=()):
    """Prepare the shared resource state; undesignated qubits stay in |0>."""
    return _prepared(int(n_qubits), Entanglement(variant), tuple(int(q) for q in designated))


@functools.lru_cache(maxsize=256)
def _prepared(n_qubits, variant, designated):
    _check_qubits(n_qubits)
    if variant is not Entanglement.PRODUCT and any(not 0 <= q < n_qubits for q in designated):
        raise ValueError(f"designated qubits {designated} out of range for {n_qubits} qubits")
    state = Statevector.zero(n_qubits)
    for op in preparation_ops(variant, designated):
        state = apply_gate(state, op)
    return state


def born_probabilities(state):
    """Exact outcome probabilities over all ``2**n`` bitstrings."""
    amps = state.amplitudes if isinstance(state, Statevector) else np.asarray(state)
    return amps.real**2 + amps.imag**2


def z_expectations(state):
    """Per-qubit Pauli-Z expectation values."""
    return born_probabilities(state) @ z_signs(state.n_qubits)


def marginal_joint_distribution(state, registers):
    """Regroup Born probabilities by agent register.

    Returns an array of shape ``(2**len(r0), 2**len(r1), ...)``.  Within a
    register the first listed qubit is the least significant bit of that
    agent's outcome index.  Cross-register correlations are kept intact.
    """
    n = state.n_qubits
    seen = []
    for reg in registers:
        seen.extend(reg.qubit_indices)
    if len(seen) != len(set(seen)):
        raise ValueError("agent registers overlap")
    if sorted(seen) != list(range(n)):
        raise ValueError("agent registers must cover every qubit exactly once")
    probs = born_probabilities(state).reshape((2,) * n)
    axes = [n - 1 - q for reg in registers for q in reversed(reg.qubit_indices)]
    shape = tuple(2 ** len(reg.qubit_indices) for reg in registers)
    return probs.transpose(axes).reshape(shape)


@dataclass(frozen=True)
class CircuitSpec:
    """Resource-state preparation followed by a list of (local) gates."""

    n_qubits: int
    entanglement: Entanglement = Entanglement.PRODUCT
    designated: tuple[int, ...] = ()
    ops: tuple[GateOp, ...] = ()

    def __post_init__(self):
        _check_qubits(self.n_qubits)
        object.__setattr__(self, "entanglement", Entanglement(self.entanglement))
        object.__setattr__(self, "designated", tuple(self.designated))
        object.__setattr__(self, "ops", tuple(self.ops))
        for op in self.ops:
            for q in op.qubits():
                if not 0 <= q < self.n_qubits:
                    raise IndexError(f"{op.kind} on qubit {q} outside {self.n_qubits}-qubit circuit")

    @property
    def n_params(self):
        used = [op.param for op in self.ops if op.param is not None]
        return max(used) + 1 if used else 0

    def run(self, params=None):
        return Statevector(self.n_qubits, self.run_batch(self.gate_angles(params)[None, :])[0])

    def probabilities(self, params=None):
        return born_probabilities(self.run(params))

    def gate_angles(self, params=None):
        """Resolved angle of every op (0 for fixed gates)."""
        return np.array([op.resolved_angle(params) if op.kind in ROTATIONS else 0.0 for op in self.ops])

    def run_batch(self, angle_rows):
        """Final amplitudes for each row of per-op angles, shape ``(M, 2**n)``."""
        angle_rows = np.asarray(angle_rows, dtype=float)
        if not np.all(np.isfinite(angle_rows)):
            raise ValueError("non-finite rotation angle")
        init = prepare_state(self.n_qubits, self.entanglement, self.designated).amplitudes
        amps = np.repeat(init[None, :], angle_rows.shape[0], axis=0)
        for pos, op in enumerate(self.ops):
            if op.kind == "CNOT":
                amps = apply_cnot(amps, op.control, op.qubit, self.n_qubits)
            elif op.kind in ROTATIONS:
                amps = apply_single(amps, rotation(op.kind, angle_rows[:, pos]), op.qubit, self.n_qubits)
            else:
                amps = apply_single(amps, FIXED_GATES[op.kind], op.qubit, self.n_qubits)
        return amps


def _outcome_index(outcome, n_qubits):
    if isinstance(outcome, str):
        # bitstrings are written most-significant (highest qubit) first
        if len(outcome) != n_qubits:
            raise ValueError(f"bitstring {outcome!r} has wrong length for {n_qubits} qubits")
        return int(outcome, 2)
    return int(outcome)


def param_shift_prob_grad(circuit, params, outcomes, shift=PARAM_SHIFT):
    """Exact gradient of ``P(outcomes)`` w.r.t. every parameter.

    ``outcomes`` is a boolean mask over basis states (or an iterable of
    indices); the probability of the whole event is differentiated, which is
    how marginal action probabilities are handled.  Each occurrence of a
    parameter is shifted separately, two circuit evaluations per occurrence.
    Returns ``(grad, probability)``.
    """
    params = np.asarray(params, dtype=float)
    mask = np.zeros(2**circuit.n_qubits, dtype=bool)
    if isinstance(outcomes, np.ndarray) and outcomes.dtype == bool:
        mask[:] = outcomes
    else:
        mask[list(outcomes)] = True
    base = circuit.gate_angles(params)
    rows, coeffs, targets = [base], [], []
    for pos, op in enumerate(circuit.ops):
        if op.param is None:
            continue
        gate_shift = op.scale * shift
        denom = 2.0 * np.sin(gate_shift)
        if abs(denom) < 1e-12:
            raise ValueError(f"shift {shift} is degenerate for scale {op.scale}")
        for sign in (1.0, -1.0):
            row = base.copy()
            row[pos] += sign * gate_shift
            rows.append(row)
        coeffs.append(op.scale / denom)
        targets.append(op.param)
    amps = circuit.run_batch(np.array(rows))
    event = (amps.real**2 + amps.imag**2)[:, mask].sum(axis=1)
    grad = np.zeros(params.size)
    for k, (c, j) in enumerate(zip(coeffs, targets)):
        grad[j] += c * (event[1 + 2 * k] - event[2 + 2 * k])
    return grad, float(event[0])


def param_shift_log_grad(circuit, params, observed_outcome, shift=PARAM_SHIFT):
    """Gradient of ``log P(observed_outcome)`` via the parameter-shift rule.

    For a stored parameter entering a gate as ``scale * theta`` this is
    ``scale * (P(theta+d) - P(theta-d)) / (2 P sin(scale * d))``, which is
    exact for any rotation gate; with ``scale = 1`` it is the textbook form.
    """
    idx = _outcome_index(observed_outcome, circuit.n_qubits)
    grad, prob = param_shift_prob_grad(circuit, params, [idx], shift)
    if prob < MIN_OUTCOME_PROB:
        raise DegenerateOutcomeError(f"outcome {observed_outcome!r} has probability {prob:.3e}")
    return grad / prob


def random_circuit(rng, n_qubits, depth, n_params=None):
    """Random layered circuit of rotations and CNOTs, for property tests."""
    ops = []
    n_params = n_params if n_params is not None else n_qubits * depth
    for layer in range(depth):
        for q in range(n_qubits):
            kind = ROTATIONS[rng.integers(3)]
            ops.append(GateOp(kind, q, param=int(rng.integers(n_params)), scale=float(rng.choice([1.0, 2.0]))))
        if n_qubits > 1:
            a, b = rng.choice(n_qubits, size=2, replace=False)
            ops.append(GateOp("CNOT", int(b), control=int(a)))
    return CircuitSpec(n_qubits, Entanglement.PRODUCT, (), tuple(ops))


def sample_outcome(probs, rng):
    """Draw one basis-state index from an exact probability vector."""
    probs = np.asarray(probs, dtype=float)
    return int(rng.choice(probs.size, p=probs / probs.sum()))


def as_bitstring(index, n_qubits):
    return format(index, f"0{n_qubits}b")


def expand_registers(sizes: Sequence[int]):
    """Contiguous registers: agent ``i`` gets the next ``sizes[i]`` qubits."""
    out, start = [], 0
    for agent, size in enumerate(sizes):
        out.append(LocalRegister(agent, tuple(range(start, start + size))))
        start += size
    return out
