import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmarl import qsim
from qmarl.errors import DegenerateOutcomeError
from qmarl.qsim import CircuitSpec, Entanglement, GateOp, LocalRegister, Statevector

S = 1 / np.sqrt(2)

# -- dense-matrix oracle, independent of the reshaping kernels ---------------

I2 = np.eye(2)
H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
X = np.array([[0, 1], [1, 0]])
Z = np.diag([1, -1])


def ry(phi):
    c, s = np.cos(phi / 2), np.sin(phi / 2)
    return np.array([[c, -s], [s, c]])


def on_qubit(gate, q, n):
    # little-endian: qubit 0 is the rightmost Kronecker factor
    mats = [gate if k == q else I2 for k in reversed(range(n))]
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def cnot_matrix(control, target, n):
    dim = 2**n
    m = np.zeros((dim, dim))
    for i in range(dim):
        j = i ^ (1 << target) if (i >> control) & 1 else i
        m[j, i] = 1
    return m


def oracle_bell(variant):
    psi = np.zeros(4)
    psi[0] = 1
    psi = cnot_matrix(0, 1, 2) @ on_qubit(H, 0, 2) @ psi
    if variant in ("psi_plus", "psi_minus"):
        psi = on_qubit(X, 1, 2) @ psi
    if variant in ("phi_minus", "psi_minus"):
        psi = on_qubit(Z, 1, 2) @ psi
    return psi


# -- state preparation -------------------------------------------------------


def test_phi_plus_amplitudes():
    np.testing.assert_allclose(qsim.prepare_state(2, "phi_plus", (0, 1)).amplitudes, [S, 0, 0, S], atol=1e-15)


def test_product_is_all_zero_state():
    np.testing.assert_allclose(qsim.prepare_state(2, "product").amplitudes, [1, 0, 0, 0])


def test_ghz3_amplitudes():
    amps = qsim.prepare_state(3, "ghz", (0, 1, 2)).amplitudes
    expected = np.zeros(8)
    expected[0] = expected[7] = S
    np.testing.assert_allclose(amps, expected, atol=1e-15)


def test_psi_minus_amplitudes():
    amps = qsim.prepare_state(2, "psi_minus", (0, 1)).amplitudes
    np.testing.assert_allclose(amps, [0, S, -S, 0], atol=1e-15)


@pytest.mark.parametrize("variant", ["phi_plus", "phi_minus", "psi_plus", "psi_minus"])
def test_bell_states_match_matrix_oracle(variant):
    np.testing.assert_allclose(qsim.prepare_state(2, variant, (0, 1)).amplitudes, oracle_bell(variant), atol=1e-14)


def test_bell_on_non_adjacent_qubits_leaves_others_in_zero():
    state = qsim.prepare_state(3, "phi_plus", (0, 2))
    expected = np.zeros(8)
    expected[0b000] = expected[0b101] = S
    np.testing.assert_allclose(state.amplitudes, expected, atol=1e-15)


@pytest.mark.parametrize(
    "variant, designated",
    [("phi_plus", (0,)), ("psi_minus", (0, 1, 2)), ("ghz", (0, 1)), ("phi_plus", (0, 0))],
)
def test_variant_register_mismatch_rejected(variant, designated):
    with pytest.raises(ValueError):
        qsim.prepare_state(3, variant, designated)


def test_preparation_has_no_parameters():
    assert all(op.param is None for op in qsim.preparation_ops("ghz", (0, 1, 2, 3)))


def test_qubit_limit_enforced():
    with pytest.raises(ValueError):
        Statevector.zero(qsim.MAX_QUBITS + 1)


def test_statevector_length_checked():
    with pytest.raises(ValueError):
        Statevector(2, np.ones(3))


# -- gates --------------------------------------------------------------------


def test_h_on_zero():
    out = qsim.apply_gate(Statevector.zero(1), GateOp("H", 0))
    np.testing.assert_allclose(out.amplitudes, [S, S])


def test_cnot_flips_target_when_control_set():
    ten = Statevector(2, [0, 1, 0, 0])  # qubit 0 set: |q1 q0> = |01>
    out = qsim.apply_gate(ten, GateOp("CNOT", 1, control=0))
    np.testing.assert_allclose(out.amplitudes, [0, 0, 0, 1])


def test_ry_pi_sends_zero_to_one():
    out = qsim.apply_gate(Statevector.zero(1), GateOp("RY", 0, angle=np.pi))
    np.testing.assert_allclose(np.abs(out.amplitudes), [0, 1], atol=1e-15)


def test_gate_index_out_of_range():
    with pytest.raises(IndexError):
        qsim.apply_gate(Statevector.zero(2), GateOp("RX", 2, angle=0.1))


def test_non_finite_angle_rejected():
    with pytest.raises(ValueError):
        qsim.apply_gate(Statevector.zero(1), GateOp("RY", 0, angle=np.nan))


def test_cnot_control_equals_target_rejected():
    with pytest.raises(ValueError):
        GateOp("CNOT", 1, control=1)


def test_apply_gate_does_not_mutate_input():
    state = Statevector.zero(2)
    qsim.apply_gate(state, GateOp("H", 0))
    np.testing.assert_array_equal(state.amplitudes, [1, 0, 0, 0])
    with pytest.raises(ValueError):
        state.amplitudes[0] = 0.0


def test_stored_parameter_enters_as_double_angle():
    op = GateOp("RY", 0, param=0)
    assert op.resolved_angle([0.3]) == pytest.approx(0.6)


# -- readout ------------------------------------------------------------------


def test_born_phi_plus():
    probs = qsim.born_probabilities(qsim.prepare_state(2, "phi_plus", (0, 1)))
    np.testing.assert_allclose(probs, [0.5, 0, 0, 0.5], atol=1e-15)


def test_born_phi_plus_after_rotation_matches_oracle():
    circ = CircuitSpec(2, "phi_plus", (0, 1), (GateOp("RY", 0, param=0),))
    probs = circ.probabilities([np.pi / 8])
    c2, s2 = np.cos(np.pi / 8) ** 2, np.sin(np.pi / 8) ** 2
    np.testing.assert_allclose(probs, [c2 / 2, s2 / 2, s2 / 2, c2 / 2], atol=1e-14)
    oracle = on_qubit(ry(np.pi / 4), 0, 2) @ oracle_bell("phi_plus")
    np.testing.assert_allclose(probs, oracle**2, atol=1e-14)


def test_z_expectations():
    assert qsim.z_expectations(Statevector.zero(1)) == pytest.approx([1.0])
    np.testing.assert_allclose(qsim.z_expectations(qsim.prepare_state(2, "phi_plus", (0, 1))), [0, 0], atol=1e-15)
    plus = qsim.apply_gate(Statevector.zero(1), GateOp("H", 0))
    np.testing.assert_allclose(qsim.z_expectations(plus), [0], atol=1e-15)


REGS = [LocalRegister(0, (0,)), LocalRegister(1, (1,))]


def test_marginal_joint_phi_plus():
    table = qsim.marginal_joint_distribution(qsim.prepare_state(2, "phi_plus", (0, 1)), REGS)
    np.testing.assert_allclose(table, [[0.5, 0], [0, 0.5]], atol=1e-15)


def test_marginal_joint_psi_plus():
    table = qsim.marginal_joint_distribution(qsim.prepare_state(2, "psi_plus", (0, 1)), REGS)
    np.testing.assert_allclose(table, [[0, 0.5], [0.5, 0]], atol=1e-15)


def test_marginal_joint_product_factorises():
    circ = CircuitSpec(2, "product", (), (GateOp("RY", 0, angle=0.7), GateOp("RX", 1, angle=1.9)))
    table = qsim.marginal_joint_distribution(circ.run(), REGS)
    np.testing.assert_allclose(table, np.outer(table.sum(1), table.sum(0)), atol=1e-15)


def test_marginal_joint_register_layout():
    # qubit 2 alone for agent 0, qubits (0, 1) for agent 1
    amps = np.zeros(8)
    amps[0b110] = 1.0
    table = qsim.marginal_joint_distribution(Statevector(3, amps), [LocalRegister(0, (2,)), LocalRegister(1, (0, 1))])
    assert table.shape == (2, 4)
    assert table[1, 0b10] == 1.0


def test_marginal_joint_rejects_overlap_and_gaps():
    state = Statevector.zero(3)
    with pytest.raises(ValueError):
        qsim.marginal_joint_distribution(state, [LocalRegister(0, (0, 1)), LocalRegister(1, (1, 2))])
    with pytest.raises(ValueError):
        qsim.marginal_joint_distribution(state, [LocalRegister(0, (0,)), LocalRegister(1, (1,))])


# -- parameter shift ----------------------------------------------------------


def finite_diff_log(circuit, params, outcome, h=1e-6):
    grad = np.zeros(len(params))
    for i in range(len(params)):
        up, down = np.array(params, float), np.array(params, float)
        up[i] += h
        down[i] -= h
        grad[i] = (np.log(circuit.probabilities(up)[outcome]) - np.log(circuit.probabilities(down)[outcome])) / (2 * h)
    return grad


def test_single_ry_log_grad():
    circ = CircuitSpec(1, ops=(GateOp("RY", 0, param=0),))
    grad = qsim.param_shift_log_grad(circ, [np.pi / 4], 1)
    # P(1) = sin^2(theta) so d log P / d theta = 2 cot(theta) = 2 at pi/4
    assert grad[0] == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(grad, finite_diff_log(circ, [np.pi / 4], 1), atol=1e-5)


def test_bitstring_outcome_is_msb_first():
    circ = CircuitSpec(2, ops=(GateOp("RY", 0, param=0), GateOp("RY", 1, param=1)))
    params = [0.4, 1.1]
    np.testing.assert_allclose(
        qsim.param_shift_log_grad(circ, params, "01"), qsim.param_shift_log_grad(circ, params, 1), atol=1e-15
    )


def test_uncorrelated_parameter_has_zero_gradient():
    circ = CircuitSpec(2, ops=(GateOp("RY", 0, param=0), GateOp("RY", 1, param=1)))
    mask = np.array([True, False, True, False])  # qubit 0 reads 0, any qubit 1
    grad, _ = qsim.param_shift_prob_grad(circ, [0.3, 0.9], mask)
    assert abs(grad[1]) < 1e-10


def test_rz_before_measurement_has_zero_gradient():
    circ = CircuitSpec(
        2, "phi_plus", (0, 1), (GateOp("RZ", 0, param=0), GateOp("RY", 0, param=1), GateOp("RZ", 1, param=2))
    )
    for outcome in range(4):
        grad = qsim.param_shift_log_grad(circ, [0.3, 0.2, 1.2], outcome)
        assert abs(grad[2]) < 1e-10


def test_degenerate_outcome_raises():
    circ = CircuitSpec(1, ops=(GateOp("RY", 0, param=0),))
    with pytest.raises(DegenerateOutcomeError):
        qsim.param_shift_log_grad(circ, [0.0], 1)


def test_chsh_win_probability_stationary_at_optimum():
    from qmarl.policies.chsh import optimal_quantum_pair
    from qmarl.training.reinforce import evaluate_chsh

    pair = optimal_quantum_pair()
    base = pair.get_flat()
    h = 1e-5
    for i in range(4):
        up, down = base.copy(), base.copy()
        up[i] += h
        down[i] -= h
        pair.set_flat(up)
        w_up = evaluate_chsh(pair).win_rate
        pair.set_flat(down)
        w_down = evaluate_chsh(pair).win_rate
        assert abs((w_up - w_down) / (2 * h)) < 1e-4
    pair.set_flat(base)


# -- properties ---------------------------------------------------------------

circuits = st.builds(
    lambda seed, n, depth: (np.random.default_rng(seed), n, depth),
    st.integers(0, 2**32 - 1),
    st.integers(1, 6),
    st.integers(1, 4),
)


@settings(max_examples=40, deadline=None)
@given(circuits)
def test_norm_preserved_after_every_gate(spec):
    rng, n, depth = spec
    circ = qsim.random_circuit(rng, n, depth)
    params = rng.uniform(-np.pi, np.pi, circ.n_params)
    state = Statevector.zero(n)
    for op in circ.ops:
        state = qsim.apply_gate(state, op, params)
        assert abs(state.norm_squared - 1) < 1e-10


@settings(max_examples=40, deadline=None)
@given(circuits)
def test_gate_then_inverse_is_identity(spec):
    rng, n, depth = spec
    amps = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    state = Statevector(n, amps / np.linalg.norm(amps))
    circ = qsim.random_circuit(rng, n, depth)
    params = rng.uniform(-np.pi, np.pi, circ.n_params)
    for op in circ.ops:
        out = qsim.apply_gate(state, op, params)
        if op.kind in qsim.ROTATIONS:
            inverse = GateOp(op.kind, op.qubit, angle=-op.resolved_angle(params))
        else:
            inverse = op
        back = qsim.apply_gate(out, inverse)
        np.testing.assert_allclose(back.amplitudes, state.amplitudes, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(circuits, st.sampled_from(list(Entanglement)))
def test_born_sums_to_one(spec, variant):
    rng, n, depth = spec
    n = max(n, 3) if variant is Entanglement.GHZ else max(n, 2)
    designated = tuple(range(3)) if variant is Entanglement.GHZ else (0, 1) if variant.is_entangled else ()
    base = qsim.random_circuit(rng, n, depth)
    circ = CircuitSpec(n, variant, designated, base.ops)
    probs = circ.probabilities(rng.uniform(-np.pi, np.pi, max(circ.n_params, 1)))
    assert abs(probs.sum() - 1) < 1e-12
    assert np.all(probs >= 0)


@settings(max_examples=100, deadline=None)
@given(circuits)
def test_param_shift_matches_finite_differences(spec):
    rng, n, depth = spec
    circ = qsim.random_circuit(rng, n, depth)
    params = rng.uniform(-np.pi, np.pi, circ.n_params)
    probs = circ.probabilities(params)
    outcome = int(np.argmax(probs))
    np.testing.assert_allclose(
        qsim.param_shift_log_grad(circ, params, outcome), finite_diff_log(circ, params, outcome), atol=1e-5
    )


@settings(max_examples=40, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_entangled_correlation_closed_form(theta_a, theta_b):
    circ = CircuitSpec(2, "phi_plus", (0, 1), (GateOp("RY", 0, param=0), GateOp("RY", 1, param=1)))
    table = qsim.marginal_joint_distribution(circ.run([theta_a, theta_b]), REGS)
    assert abs(table[0, 0] + table[1, 1] - np.cos(theta_a - theta_b) ** 2) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 3))
def test_local_gates_do_not_move_other_marginal_in_product_state(seed, n_a, n_b):
    rng = np.random.default_rng(seed)
    n = n_a + n_b
    regs = qsim.expand_registers([n_a, n_b])
    prelude = qsim.random_circuit(rng, n, 2)
    params = rng.uniform(-np.pi, np.pi, prelude.n_params)
    # build a product state: each register gets its own local circuit
    state = Statevector.zero(n)
    for reg in regs:
        for q in reg.qubit_indices:
            state = qsim.apply_gate(state, GateOp("RY", q, angle=rng.uniform(0, np.pi)))
            state = qsim.apply_gate(state, GateOp("RZ", q, angle=rng.uniform(0, np.pi)))
    before = qsim.marginal_joint_distribution(state, regs).sum(axis=0)
    for op in prelude.ops:
        if all(q in regs[0].qubit_indices for q in op.qubits()):
            state = qsim.apply_gate(state, op, params)
    after = qsim.marginal_joint_distribution(state, regs).sum(axis=0)
    np.testing.assert_allclose(after, before, atol=1e-12)
