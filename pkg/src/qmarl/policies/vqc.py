"""Variational circuit layer with adjoint-mode gradients.

The layer maps per-sample encoding angles ``(B, 3 * n_qubits)`` to exact
readout features: Pauli-Z expectations ``(B, n_qubits)`` or the full Born
distribution ``(B, 2**n_qubits)``.  Circuit per sample::

    [optional prepended RZ-RY-RZ block]
    RX(a) RY(b) RZ(c) on every qubit           (angles from the input)
    depth x [ rotations | CNOT chain 0->1->...->n-1 | rotations ]

With ``rotations_per_layer=4`` each side of the CNOT chain is RZ-RY per
qubit; with 6 it is RZ-RY-RZ.  Trainable angles enter as ``2 * theta``.

Gradients use the adjoint method: one forward pass storing only the final
state, then a reverse sweep that un-computes gates while accumulating
``d loss / d angle = Im <lambda| P |psi>`` for each rotation ``exp(-i a P/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import qsim

SIDE_ROTATIONS = {4: ("RZ", "RY"), 6: ("RZ", "RY", "RZ")}
ENCODING = ("RX", "RY", "RZ")
READOUTS = ("z", "probs")


@dataclass
class _Cache:
    final: np.ndarray
    angles: np.ndarray
    batch: int


class Vqc:
    """Trainable circuit stage; see module docstring for the layout.

    ``mixed_first_qubit`` starts qubit 0 in the maximally mixed state.  That
    is exactly the local (reduced) state of an agent holding one half of a
    Bell pair or one leg of a GHZ state, so it stands in for inter-agent
    entanglement when only this agent's statistics are needed.
    """

    def __init__(
        self,
        n_qubits,
        depth,
        rotations_per_layer=4,
        readout="z",
        prepend_block=False,
        mixed_first_qubit=False,
        rng=None,
    ):
        if rotations_per_layer not in SIDE_ROTATIONS:
            raise ValueError(f"rotations_per_layer must be 4 or 6, got {rotations_per_layer}")
        if readout not in READOUTS:
            raise ValueError(f"readout must be one of {READOUTS}, got {readout!r}")
        if not 1 <= n_qubits <= qsim.MAX_QUBITS or depth < 1:
            raise ValueError(f"invalid circuit size n_qubits={n_qubits}, depth={depth}")
        self.n_qubits = n_qubits
        self.depth = depth
        self.rotations_per_layer = rotations_per_layer
        self.readout = readout
        self.prepend_block = prepend_block
        self.mixed_first_qubit = mixed_first_qubit
        self.schedule = self._build_schedule()
        self.segments = self._fuse(self.schedule)
        cut = max(i for i, e in enumerate(self.schedule) if e[0] == "enc") + 1
        self._pre_by_qubit = [[e for e in self.schedule[:cut] if e[2] == q] for q in range(n_qubits)]
        self._post_segments = self._fuse(self.schedule[cut:])
        n = sum(1 for entry in self.schedule if entry[0] == "var")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = rng.uniform(0.0, np.pi, size=n)
        self._var_mats = None
        self._post = None
        self._init = None

    def _build_schedule(self):
        sched, p = [], 0
        n = self.n_qubits
        if self.prepend_block:
            for q in range(n):
                for kind in ("RZ", "RY", "RZ"):
                    sched.append(("var", kind, q, p))
                    p += 1
        for q in range(n):
            for j, kind in enumerate(ENCODING):
                sched.append(("enc", kind, q, 3 * q + j))
        side = SIDE_ROTATIONS[self.rotations_per_layer]
        for _ in range(self.depth):
            for q in range(n):
                for kind in side:
                    sched.append(("var", kind, q, p))
                    p += 1
            for q in range(n - 1):
                sched.append(("cnot", q, q + 1, None))
            for q in range(n):
                for kind in side:
                    sched.append(("var", kind, q, p))
                    p += 1
        return sched

    @staticmethod
    def _fuse(schedule):
        """Group runs of one-qubit gates by qubit; CNOTs split the runs."""
        segments, run = [], {}
        for entry in schedule:
            if entry[0] == "cnot":
                if run:
                    segments.append(("fused", list(run.items())))
                    run = {}
                segments.append(entry)
            else:
                run.setdefault(entry[2], []).append(entry)
        if run:
            segments.append(("fused", list(run.items())))
        return segments

    # -- parameter plumbing -------------------------------------------------

    @property
    def in_dim(self):
        return 3 * self.n_qubits

    @property
    def out_dim(self):
        return self.n_qubits if self.readout == "z" else 2**self.n_qubits

    @property
    def n_params(self):
        return self.params.size

    def get_flat(self):
        return self.params.copy()

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.params.size:
            raise ValueError(f"expected {self.params.size} angles, got {flat.size}")
        self.params = flat.copy()
        self._var_mats = None
        self._post = None
        self._init = None

    def describe(self):
        return {
            "type": "vqc",
            "n_qubits": self.n_qubits,
            "depth": self.depth,
            "rotations_per_layer": self.rotations_per_layer,
            "readout": self.readout,
            "prepend_block": self.prepend_block,
            "mixed_first_qubit": self.mixed_first_qubit,
            "angle_scale": qsim.ANGLE_SCALE,
        }

    @classmethod
    def from_description(cls, desc):
        return cls(
            desc["n_qubits"],
            desc["depth"],
            desc["rotations_per_layer"],
            desc["readout"],
            desc["prepend_block"],
            desc["mixed_first_qubit"],
        )

    # -- simulation ---------------------------------------------------------

    def _branches(self):
        dim = 2**self.n_qubits
        if self.mixed_first_qubit:
            starts, weights = (0, 1), (0.5, 0.5)
        else:
            starts, weights = (0,), (1.0,)
        init = np.zeros((len(starts), dim), dtype=complex)
        for k, s in enumerate(starts):
            init[k, s] = 1.0
        return init, np.array(weights)

    def _gate(self, entry, angles_k):
        tag, kind, q, idx = entry
        if tag == "var":
            if self._var_mats is None:
                kinds = [e[1] for e in self.schedule if e[0] == "var"]
                self._var_mats = [
                    qsim.rotation(k, qsim.ANGLE_SCALE * theta) for k, theta in zip(kinds, self.params)
                ]
            return self._var_mats[idx]
        return qsim.rotation(kind, angles_k[:, idx])

    def run(self, angles):
        """Final statevectors for every (branch, sample), shape ``(K*B, 2**n)``.

        Everything up to the encoding leaves the register in a product state,
        and everything after it is one fixed unitary, so the final state is
        that product state times a cached matrix.
        """
        angles = np.asarray(angles, dtype=np.float64)
        return self._encoded(angles) @ self._post_matrix()

    def run_gate_by_gate(self, angles):
        """Reference simulation applying every gate in turn; same output as ``run``."""
        angles = np.asarray(angles, dtype=np.float64)
        batch = angles.shape[0]
        init, _ = self._branches()
        k = init.shape[0]
        states = np.repeat(init, batch, axis=0)
        angles_k = np.tile(angles, (k, 1))
        return self._apply_segments(states, self.segments, angles_k)

    def _apply_segments(self, states, segments, angles_k):
        n = self.n_qubits
        for seg in segments:
            if seg[0] == "cnot":
                states = qsim.apply_cnot(states, seg[1], seg[2], n)
                continue
            for q, entries in seg[1]:
                mat = self._gate(entries[0], angles_k)
                for entry in entries[1:]:
                    mat = self._gate(entry, angles_k) @ mat
                states = qsim.apply_single(states, mat, q, n)
        return states

    def _post_matrix(self):
        """Rows are images of the basis states under the post-encoding circuit."""
        if self._post is None:
            dim = 2**self.n_qubits
            basis = np.eye(dim, dtype=complex)
            self._post = self._apply_segments(basis, self._post_segments, None)
        return self._post

    def _initial_qubit_states(self):
        """Per-branch single-qubit states after the optional prepended block, ``(K, n, 2)``."""
        if self._init is None:
            starts = (0, 1) if self.mixed_first_qubit else (0,)
            init = np.zeros((len(starts), self.n_qubits, 2), dtype=complex)
            init[:, :, 0] = 1.0
            for k, s in enumerate(starts):
                init[k, 0] = (1.0 - s, s)
                for q in range(self.n_qubits):
                    for entry in self._pre_by_qubit[q]:
                        if entry[0] == "var":
                            init[k, q] = self._gate(entry, None) @ init[k, q]
            self._init = init
        return self._init

    def _encoded(self, angles):
        """Product states after the encoding layer, ``(K*B, 2**n)``."""
        batch, n = angles.shape[0], self.n_qubits
        init = self._initial_qubit_states()
        ang = angles.reshape(batch, n, 3)
        mats = None
        for j, kind in enumerate(ENCODING):
            m = qsim.rotation(kind, ang[:, :, j].ravel()).reshape(batch, n, 2, 2)
            mats = m if mats is None else m @ mats
        v = np.einsum("bqij,kqj->kbqi", mats, init)
        # little-endian: qubit 0 is the lowest bit, so it goes last in the Kronecker product
        state = v[:, :, n - 1, :]
        for q in range(n - 2, -1, -1):
            state = (state[..., :, None] * v[:, :, q, None, :]).reshape(init.shape[0], batch, -1)
        return state.reshape(-1, 2**n)

    def forward(self, angles):
        angles = np.asarray(angles, dtype=np.float64)
        squeeze = angles.ndim == 1
        if squeeze:
            angles = angles[None, :]
        if angles.shape[1] != self.in_dim:
            raise ValueError(f"expected {self.in_dim} encoding angles, got {angles.shape[1]}")
        batch = angles.shape[0]
        final = self.run(angles)
        _, weights = self._branches()
        probs = (final.real**2 + final.imag**2).reshape(weights.size, batch, -1)
        probs = np.tensordot(weights, probs, axes=1)
        feats = probs @ qsim.z_signs(self.n_qubits) if self.readout == "z" else probs
        cache = _Cache(final, angles, batch)
        return (feats[0] if squeeze else feats), (cache, squeeze)

    def backward(self, tape, output_grad):
        cache, squeeze = tape
        g = np.asarray(output_grad, dtype=np.float64)
        if squeeze:
            g = g[None, :]
        if self.readout == "z":
            g = g @ qsim.z_signs(self.n_qubits).T
        _, weights = self._branches()
        k, batch, n = weights.size, cache.batch, self.n_qubits
        obs = np.concatenate([w * g for w in weights], axis=0)
        psi = cache.final
        lam = obs * psi
        angles_k = np.tile(cache.angles, (k, 1))
        grad_params = np.zeros_like(self.params)
        grad_angles = np.zeros((k * batch, self.in_dim))
        for entry in reversed(self.schedule):
            tag = entry[0]
            if tag == "cnot":
                psi = qsim.apply_cnot(psi, entry[1], entry[2], n)
                lam = qsim.apply_cnot(lam, entry[1], entry[2], n)
                continue
            _, kind, q, idx = entry
            p_psi = qsim.apply_single(psi, qsim.PAULI[kind[1]], q, n)
            d_angle = np.einsum("bi,bi->b", lam.conj(), p_psi).imag
            if tag == "var":
                grad_params[idx] += qsim.ANGLE_SCALE * d_angle.sum()
            else:
                grad_angles[:, idx] += d_angle
            inv = np.conj(np.swapaxes(self._gate(entry, angles_k), -1, -2))
            psi = qsim.apply_single(psi, inv, q, n)
            lam = qsim.apply_single(lam, inv, q, n)
        grad_angles = grad_angles.reshape(k, batch, -1).sum(axis=0)
        return grad_params, (grad_angles[0] if squeeze else grad_angles)


def parameter_shift_grad(vqc, angles, output_grad):
    """Reference gradient of ``sum(output_grad * features)`` by parameter shift.

    Independent of the adjoint sweep; used to cross-check it.
    """
    angles = np.asarray(angles, dtype=np.float64)
    base = vqc.get_flat()

    def objective(params, ang):
        vqc.set_flat(params)
        feats, _ = vqc.forward(ang)
        return float(np.sum(output_grad * feats))

    grad_p = np.zeros_like(base)
    try:
        # stored theta shifted by pi/4 is a pi/2 shift of the gate angle
        for i in range(base.size):
            plus, minus = base.copy(), base.copy()
            plus[i] += qsim.PARAM_SHIFT
            minus[i] -= qsim.PARAM_SHIFT
            grad_p[i] = qsim.ANGLE_SCALE * (objective(plus, angles) - objective(minus, angles)) / 2.0
        grad_a = np.zeros_like(angles)
        for idx in np.ndindex(angles.shape):
            plus, minus = angles.copy(), angles.copy()
            plus[idx] += np.pi / 2
            minus[idx] -= np.pi / 2
            grad_a[idx] = (objective(base, plus) - objective(base, minus)) / 2.0
    finally:
        vqc.set_flat(base)
    return grad_p, grad_a
