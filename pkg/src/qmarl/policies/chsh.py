"""CHSH agents: two angles (or logits) per agent, one per input bit.

Quantum agents share a two-qubit resource state; Alice owns qubit 0, Bob
qubit 1.  On input ``x`` Alice applies ``RY(2 * theta_A[x])`` and measures in
the computational basis; Bob does the same with ``theta_B[y]``.  Classical
agents are independent Bernoulli policies with ``P(1 | x) = sigmoid(theta[x])``.

The pair's parameters are laid out as ``[A0, A1, B0, B1]``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .. import qsim
from ..qsim import CircuitSpec, Entanglement, GateOp, LocalRegister

REGISTERS = (LocalRegister(0, (0,)), LocalRegister(1, (1,)))
_P_FLOOR = 1e-12


class ChshMode(str, enum.Enum):
    CLASSICAL = "classical"
    QUANTUM = "quantum"


@dataclass
class ChshAgentPolicy:
    theta: np.ndarray
    mode: ChshMode = ChshMode.QUANTUM

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).copy()
        self.mode = ChshMode(self.mode)
        if self.theta.shape != (2,):
            raise ValueError(f"a CHSH agent has exactly 2 parameters, got shape {self.theta.shape}")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class ChshPair:
    """Alice and Bob plus the shared resource they use."""

    alice: ChshAgentPolicy
    bob: ChshAgentPolicy
    entanglement: Entanglement = Entanglement.PHI_PLUS

    def __post_init__(self):
        self.entanglement = Entanglement(self.entanglement)
        if self.alice.mode != self.bob.mode:
            raise ValueError("both CHSH agents must use the same mode")
        if self.entanglement is Entanglement.GHZ:
            raise ValueError("CHSH uses a two-qubit resource; GHZ needs three or more qubits")

    @classmethod
    def init(cls, mode, entanglement, rng):
        mode = ChshMode(mode)
        if mode is ChshMode.QUANTUM:
            draw = lambda: rng.uniform(0.0, np.pi, size=2)  # noqa: E731
        else:
            draw = lambda: rng.normal(0.0, 1.0, size=2)  # noqa: E731
        return cls(ChshAgentPolicy(draw(), mode), ChshAgentPolicy(draw(), mode), entanglement)

    @property
    def mode(self):
        return self.alice.mode

    @property
    def n_params(self):
        return 4

    def get_flat(self):
        return np.concatenate([self.alice.theta, self.bob.theta])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != 4:
            raise ValueError(f"a CHSH pair has 4 parameters, got {flat.size}")
        self.alice.theta = flat[:2].copy()
        self.bob.theta = flat[2:].copy()

    def circuit(self, x, y):
        """Circuit for inputs ``(x, y)``; gate parameters index the flat vector."""
        return CircuitSpec(
            2,
            self.entanglement,
            (0, 1) if self.entanglement.is_entangled else (),
            (GateOp("RY", 0, param=int(x)), GateOp("RY", 1, param=2 + int(y))),
        )


def chsh_joint_action_distribution(pair, inputs, entanglement=None):
    """``P[a, b]`` for inputs ``(x, y)``.

    Classical agents ignore ``entanglement``; quantum agents use it in place
    of the pair's own resource when given.
    """
    x, y = int(inputs[0]), int(inputs[1])
    if pair.mode is ChshMode.CLASSICAL:
        pa = _sigmoid(pair.alice.theta[x])
        pb = _sigmoid(pair.bob.theta[y])
        return np.outer([1.0 - pa, pa], [1.0 - pb, pb])
    if entanglement is not None and Entanglement(entanglement) is not pair.entanglement:
        pair = ChshPair(pair.alice, pair.bob, entanglement)
    state = pair.circuit(x, y).run(pair.get_flat())
    return qsim.marginal_joint_distribution(state, REGISTERS)


def log_joint_grad(pair, inputs, actions):
    """Gradient of ``log P(a, b | x, y)`` w.r.t. ``[A0, A1, B0, B1]``.

    Under a product resource this splits into the two agents' own
    ``log pi_i`` gradients; with entanglement it keeps the correlation term
    that makes the (1, 1) input learnable.
    """
    x, y = int(inputs[0]), int(inputs[1])
    a, b = int(actions[0]), int(actions[1])
    grad = np.zeros(4)
    if pair.mode is ChshMode.CLASSICAL:
        grad[x] = a - _sigmoid(pair.alice.theta[x])
        grad[2 + y] = b - _sigmoid(pair.bob.theta[y])
        return grad
    # outcome index: Alice's bit is qubit 0 (least significant)
    return qsim.param_shift_log_grad(pair.circuit(x, y), pair.get_flat(), a + 2 * b)


def _bernoulli_entropy_slope(p):
    p = np.clip(p, _P_FLOOR, 1.0 - _P_FLOOR)
    return np.log((1.0 - p) / p)


def marginal_probs(pair, inputs):
    """``(P_A(a=1 | x), P_B(b=1 | y))``."""
    table = chsh_joint_action_distribution(pair, inputs)
    return float(table[1, :].sum()), float(table[:, 1].sum())


def entropy_grad(pair, inputs):
    """Gradient of ``H(pi_A(.|x)) + H(pi_B(.|y))``.

    Each agent's entropy depends only on its own parameters (no signalling),
    so the sum splits cleanly into per-agent gradients.
    """
    x, y = int(inputs[0]), int(inputs[1])
    grad = np.zeros(4)
    if pair.mode is ChshMode.CLASSICAL:
        for offset, theta, idx in ((0, pair.alice.theta, x), (2, pair.bob.theta, y)):
            p = _sigmoid(theta[idx])
            grad[offset + idx] = _bernoulli_entropy_slope(p) * p * (1.0 - p)
        return grad
    circ = pair.circuit(x, y)
    idx = np.arange(4)
    for bit, agent_params in ((0, slice(0, 2)), (1, slice(2, 4))):
        mask = ((idx >> bit) & 1).astype(bool)
        dp, p = qsim.param_shift_prob_grad(circ, pair.get_flat(), mask)
        grad[agent_params] += _bernoulli_entropy_slope(p) * dp[agent_params]
    return grad


def optimal_quantum_pair(entanglement=Entanglement.PHI_PLUS):
    """Angles reaching cos^2(pi/8) with a shared |Phi+>."""
    return ChshPair(
        ChshAgentPolicy([0.0, np.pi / 4]),
        ChshAgentPolicy([np.pi / 8, -np.pi / 8]),
        entanglement,
    )


def deterministic_classical_pair(alice_bits, bob_bits, margin=50.0):
    """Classical pair whose outputs are (numerically) fixed functions of the input."""
    to_logit = lambda bits: np.where(np.asarray(bits) == 1, margin, -margin)  # noqa: E731
    return ChshPair(
        ChshAgentPolicy(to_logit(alice_bits), ChshMode.CLASSICAL),
        ChshAgentPolicy(to_logit(bob_bits), ChshMode.CLASSICAL),
        Entanglement.PRODUCT,
    )
