import math

import numpy as np
import pytest
from scipy.linalg import hadamard as dense_hadamard

from qcplab.errors import DimensionError, ResourceLimitError
from qcplab.f2 import F2Subspace, rand_subspace
from qcplab.qsim import (
    QuantumState,
    RegisterLayout,
    apply_unitary,
    collapse_register,
    drop_register,
    fidelity,
    gentle_measure,
    hadamard_all,
    measure_register,
    partial_trace,
    prepare_subspace_state,
    purify,
    random_mixed,
    random_pure,
    register_distribution,
    rename_register,
    trace_distance,
)


def reference_subspace_state(space: F2Subspace) -> np.ndarray:
    """Independent construction straight from the definition."""
    vec = np.zeros(1 << space.n, dtype=complex)
    for v in space.enumerate_bits():
        vec[v] = 1.0
    return vec / np.linalg.norm(vec)


def test_prepare_subspace_state_examples():
    zero = prepare_subspace_state(F2Subspace.zero(3))
    assert np.allclose(zero.data, np.eye(8)[0])
    full1 = prepare_subspace_state(F2Subspace.full(1))
    assert np.allclose(full1.data, np.ones(2) / math.sqrt(2))
    diag = prepare_subspace_state(F2Subspace.from_spanning(2, [0b11]))
    assert np.allclose(diag.data, np.array([1, 0, 0, 1]) / math.sqrt(2))


def test_hadamard_maps_subspace_to_dual_brute_force():
    """Both sides rebuilt from definitions with a dense Hadamard matrix."""
    rng = np.random.default_rng(2)
    for n in range(1, 7):
        H = dense_hadamard(1 << n) / math.sqrt(1 << n)
        for _ in range(6):
            s = rand_subspace(n, int(rng.integers(0, n + 1)), rng)
            lhs = H @ reference_subspace_state(s)
            rhs = reference_subspace_state(s.dual())
            assert np.allclose(lhs, rhs, atol=1e-12)
            got = hadamard_all(prepare_subspace_state(s), "v")
            assert fidelity(got, prepare_subspace_state(s.dual())) >= 1 - 1e-10


def test_hadamard_involution_and_norm():
    rng = np.random.default_rng(3)
    st = random_pure(RegisterLayout.of(("a", 3), ("b", 2)), rng)
    once = hadamard_all(st, "a")
    assert abs(np.linalg.norm(once.data) - 1) < 1e-10
    twice = hadamard_all(once, "a")
    assert fidelity(twice, st) >= 1 - 1e-10


def test_partial_trace_examples():
    lay = RegisterLayout.of(("a", 1), ("b", 1))
    bell = QuantumState(lay, np.array([1, 0, 0, 1]) / math.sqrt(2))
    red = partial_trace(bell, ["a"])
    assert np.allclose(red.data, np.eye(2) / 2)
    # product state factors
    rng = np.random.default_rng(4)
    sa = random_pure(RegisterLayout.of(("a", 2)), rng)
    sb = random_pure(RegisterLayout.of(("b", 1)), rng)
    prod = sa.tensor(sb)
    back = partial_trace(prod, ["a"])
    assert trace_distance(back, sa.to_mixed()) < 1e-10
    assert abs(np.trace(back.data).real - 1) < 1e-10
    with pytest.raises(DimensionError):
        partial_trace(prod, ["zzz"])


def test_purify_roundtrip():
    rng = np.random.default_rng(5)
    for _ in range(10):
        rho = random_mixed(RegisterLayout.of(("a", 2)), rng)
        psi = purify(rho)
        assert psi.pure
        back = partial_trace(psi, ["a"])
        assert trace_distance(back, rho) <= 1e-9
    # purifying a pure state keeps it recoverable
    pure = random_pure(RegisterLayout.of(("a", 1)), rng)
    again = partial_trace(purify(pure.to_mixed()), ["a"])
    assert trace_distance(again, pure.to_mixed()) <= 1e-9
    # maximally mixed qubit purifies to a maximally entangled 2-qubit state
    halves = QuantumState(RegisterLayout.of(("a", 1)), np.eye(2) / 2)
    psi = purify(halves)
    assert psi.layout.total_qubits == 2
    sched = np.abs(psi.data) ** 2
    assert np.allclose(sorted(sched[sched > 1e-12]), [0.5, 0.5])


def test_trace_distance_closed_forms():
    lay = RegisterLayout.of(("q", 1))
    s0 = QuantumState(lay, np.array([1, 0], complex))
    s1 = QuantumState(lay, np.array([0, 1], complex))
    plus = QuantumState(lay, np.array([1, 1], complex) / math.sqrt(2))
    assert trace_distance(s0, s0) == 0
    assert abs(trace_distance(s0, s1) - 1) < 1e-12
    assert abs(trace_distance(s0, plus) - 1 / math.sqrt(2)) < 1e-12
    # cross-check with the pure-state formula sqrt(1 - |<a|b>|^2)
    rng = np.random.default_rng(6)
    for _ in range(10):
        a = random_pure(lay, rng)
        b = random_pure(lay, rng)
        expect = math.sqrt(1 - abs(np.vdot(a.data, b.data)) ** 2)
        assert abs(trace_distance(a, b) - expect) < 1e-10
    with pytest.raises(DimensionError):
        trace_distance(s0, random_pure(RegisterLayout.of(("q", 2)), rng))


def test_triangle_inequality_and_symmetry():
    rng = np.random.default_rng(7)
    lay = RegisterLayout.of(("q", 2))
    a, b, c = (random_mixed(lay, rng) for _ in range(3))
    assert abs(trace_distance(a, b) - trace_distance(b, a)) < 1e-12
    assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-12


def test_measure_register_examples():
    rng = np.random.default_rng(8)
    lay = RegisterLayout.of(("q", 3))
    zero = QuantumState.basis(lay, 0)
    out, post, p = measure_register(zero, "q", rng)
    assert out == 0 and p == 1.0
    bell = QuantumState(RegisterLayout.of(("a", 1), ("b", 1)),
                        np.array([1, 0, 0, 1]) / math.sqrt(2))
    dist = register_distribution(bell, "a")
    assert np.allclose(dist, [0.5, 0.5])
    assert abs(dist.sum() - 1) < 1e-10
    out, post, p = measure_register(bell, "a", rng)
    assert abs(p - 0.5) < 1e-12
    # post-state is the matching product state
    expect = np.zeros(4)
    expect[out * 3] = 1  # |00> or |11>
    assert np.allclose(np.abs(post.data) ** 2, expect)


def test_gentle_measure_examples_and_sweep():
    lay = RegisterLayout.of(("q", 1))
    # state already in the image: untouched
    s0 = QuantumState(lay, np.array([1, 0], complex))
    out, post, dist = gentle_measure(s0, np.diag([1.0, 0.0]))
    assert out == 0 and dist <= 1e-12
    # closed form: eps = 0.01 gives distance exactly 0.1
    psi = QuantumState(lay, np.array([math.sqrt(0.99), math.sqrt(0.01)]))
    out, post, dist = gentle_measure(psi, np.diag([1.0, 0.0]))
    assert out == 0
    assert abs(dist - 0.1) <= 1e-9
    # sweep: random pure states with prescribed eps
    rng = np.random.default_rng(9)
    lay2 = RegisterLayout.of(("q", 2))
    proj = np.diag([1.0, 1.0, 0.0, 0.0])
    for eps in (0.5, 0.1, 0.01):
        for _ in range(10):
            inside = np.zeros(4, complex)
            inside[:2] = rng.normal(size=2) + 1j * rng.normal(size=2)
            inside /= np.linalg.norm(inside)
            outside = np.zeros(4, complex)
            outside[2:] = rng.normal(size=2) + 1j * rng.normal(size=2)
            outside /= np.linalg.norm(outside)
            vec = math.sqrt(1 - eps) * inside + math.sqrt(eps) * outside
            st = QuantumState(lay2, vec)
            out, post, dist = gentle_measure(st, proj)  # bound asserted inside
            assert dist <= math.sqrt(eps) + 1e-9
    with pytest.raises(DimensionError):
        gentle_measure(s0, np.array([[0.5, 0], [0, 0]]))


def test_unitary_norm_preservation_and_register_targeting():
    rng = np.random.default_rng(10)
    lay = RegisterLayout.of(("a", 1), ("b", 2))
    st = random_pure(lay, rng)
    # random unitary from QR
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    q, _ = np.linalg.qr(g)
    out = apply_unitary(st, q, ["b"])
    assert abs(np.linalg.norm(out.data) - 1) < 1e-10
    # acting on b leaves a's marginal alone
    assert trace_distance(partial_trace(out, ["a"]), partial_trace(st, ["a"])) < 1e-10


def test_state_validation_and_caps():
    lay = RegisterLayout.of(("q", 1))
    with pytest.raises(DimensionError):
        QuantumState(lay, np.array([1.0, 1.0]))  # unnormalized
    with pytest.raises(DimensionError):
        QuantumState(lay, np.array([[0.9, 0.3], [0.2, 0.1]]))  # not hermitian
    with pytest.raises(ResourceLimitError):
        QuantumState.basis(RegisterLayout.of(("q", 23)))
    with pytest.raises(ResourceLimitError):
        QuantumState(RegisterLayout.of(("q", 13)), np.eye(1 << 13) / (1 << 13))
    with pytest.raises(DimensionError):
        RegisterLayout.of(("q", 1), ("q", 2))


def test_json_dump_golden():
    lay = RegisterLayout.of(("a", 1), ("b", 1))
    bell = QuantumState(lay, np.array([1, 0, 0, 1]) / math.sqrt(2))
    js = bell.to_json()
    back = QuantumState.from_json(js)
    assert back.layout == lay and np.allclose(back.data, bell.data)
    mixed = partial_trace(bell, ["a"]).to_json()
    back2 = QuantumState.from_json(mixed)
    assert not back2.pure
    assert np.allclose(back2.data, np.eye(2) / 2)


def test_rename_and_drop_register():
    rng = np.random.default_rng(11)
    st = random_pure(RegisterLayout.of(("a", 2)), rng)
    renamed = rename_register(st, "a", "z")
    assert renamed.layout.names() == ("z",)
    joined = st.tensor(QuantumState.basis(RegisterLayout.of(("pad", 2)), 0))
    dropped = drop_register(joined, "pad")
    assert fidelity(dropped, st) >= 1 - 1e-12
    collapsed = collapse_register(joined, "a", int(np.argmax(np.abs(st.data))))
    assert collapsed.layout == joined.layout
    with pytest.raises(DimensionError):
        drop_register(joined, "a")  # register is in superposition
