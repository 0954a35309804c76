"""Measurement machinery: goodness POVMs, projective and threshold
implementations, controlled projections, shift distance, and a sequential
sampling estimator that approximates the projective implementation.

Conventions follow the binary-outcome measurement (P, Q = I - P): outcome 0
is the accepting branch, and a program is "tested gamma-good" when the
threshold projector for its goodness POVM accepts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DimensionError, ResourceLimitError
from .oracles import ClassicalFunction, InstrumentedOracle, Op, run_ops_batch
from .qsim import QuantumState, RegisterLayout, partial_trace

EIG_MERGE_TOL = 1e-9
THRESHOLD_SLACK = 1e-9  # eigenvalues within this of gamma count as accepted
POVM_EIG_TOL = 1e-9
COIN_CAP = 4096
EXACT_DIM_CAP = 1 << 12

_OUTPUT_VALUE_CACHE: dict[tuple, np.ndarray] = {}


@dataclass(frozen=True)
class BinaryPovm:
    """The accepting element P of a binary POVM (P, I - P); 0 <= P <= I."""

    operator: np.ndarray

    def __post_init__(self):
        op = np.asarray(self.operator, dtype=np.complex128)
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise DimensionError("POVM operator must be square")
        if np.max(np.abs(op - op.conj().T)) > POVM_EIG_TOL:
            raise DimensionError("POVM operator must be Hermitian")
        eigs = np.linalg.eigvalsh(op)
        if eigs.min() < -POVM_EIG_TOL or eigs.max() > 1 + POVM_EIG_TOL:
            raise DimensionError(f"POVM eigenvalues outside [0,1]: [{eigs.min()}, {eigs.max()}]")
        object.__setattr__(self, "operator", op)

    @property
    def dim(self) -> int:
        return self.operator.shape[0]

    def expectation(self, state: QuantumState) -> float:
        rho = state.density()
        if rho.shape != self.operator.shape:
            raise DimensionError("state dimension does not match POVM")
        return float(np.real(np.trace(self.operator @ rho)))


@dataclass(frozen=True)
class ProjectiveImplementation:
    """Spectral form of a binary POVM: descending eigenvalues with rank projectors.

    Eigenvalues within the merge tolerance share one projector, so repeated
    measurement is exactly projective even across numerically split
    degeneracies.
    """

    eigenvalues: tuple[float, ...]
    projectors: tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    def reconstruct(self) -> np.ndarray:
        acc = np.zeros_like(self.projectors[0])
        for p, pi in zip(self.eigenvalues, self.projectors):
            acc = acc + p * pi
        return acc


def proj_impl(povm: BinaryPovm, merge_tol: float = EIG_MERGE_TOL) -> ProjectiveImplementation:
    """Projective implementation of a binary POVM by exact spectral decomposition."""
    eigs, vecs = np.linalg.eigh(povm.operator)
    order = np.argsort(eigs)[::-1]
    eigs = eigs[order].clip(0.0, 1.0)
    vecs = vecs[:, order]
    groups: list[list[int]] = []
    for i, e in enumerate(eigs):
        if groups and abs(eigs[groups[-1][-1]] - e) <= merge_tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    values = []
    projectors = []
    for idxs in groups:
        block = vecs[:, idxs]
        values.append(float(np.mean(eigs[idxs])))
        pi = block @ block.conj().T
        pi.flags.writeable = False
        projectors.append(pi)
    return ProjectiveImplementation(tuple(values), tuple(projectors))


def apply_proj_impl(
    pi: ProjectiveImplementation, state: QuantumState, rng: np.random.Generator
) -> tuple[float, QuantumState]:
    """Measure the projective implementation: sample an eigenvalue, collapse."""
    if state.layout.dim != pi.dim:
        raise DimensionError("state dimension does not match projective implementation")
    probs = np.array([projector_expectation(p, state) for p in pi.projectors])
    probs = probs.clip(min=0.0)
    probs /= probs.sum()
    k = int(rng.choice(len(probs), p=probs))
    post = collapse_with_projector(state, pi.projectors[k])
    return pi.eigenvalues[k], post


def projector_expectation(projector: np.ndarray, state: QuantumState) -> float:
    if state.pure:
        return float(np.real(np.vdot(state.data, projector @ state.data)))
    return float(np.real(np.trace(projector @ state.data)))


def collapse_with_projector(state: QuantumState, projector: np.ndarray) -> QuantumState:
    if state.pure:
        vec = projector @ state.data
        nrm = np.linalg.norm(vec)
        if nrm <= 1e-300:
            raise DimensionError("collapse onto a zero-probability branch")
        return QuantumState(state.layout, vec / nrm, validate=False)
    m = projector @ state.data @ projector
    tr = np.trace(m).real
    if tr <= 1e-300:
        raise DimensionError("collapse onto a zero-probability branch")
    return QuantumState(state.layout, m / tr, validate=False)


def measure_binary(
    state: QuantumState, projector: np.ndarray, rng: np.random.Generator
) -> tuple[int, QuantumState, float]:
    """Binary projective measurement; outcome 0 is the projector branch."""
    p0 = min(max(projector_expectation(projector, state), 0.0), 1.0)
    if rng.random() < p0:
        return 0, collapse_with_projector(state, projector), p0
    comp = np.eye(state.layout.dim) - projector
    return 1, collapse_with_projector(state, comp), p0


def measure_binary_mask(
    state: QuantumState, mask: np.ndarray, rng: np.random.Generator
) -> tuple[int, QuantumState, float]:
    """Binary measurement of a diagonal (computational-subset) projector."""
    mask = np.asarray(mask, dtype=bool)
    probs = state.probabilities()
    p0 = min(max(float(probs[mask].sum()), 0.0), 1.0)
    keep = mask if rng.random() < p0 else ~mask
    outcome = 0 if keep is mask else 1
    if state.pure:
        vec = np.where(keep, state.data, 0.0)
        nrm = np.linalg.norm(vec)
        if nrm <= 1e-300:
            raise DimensionError("collapse onto a zero-probability branch")
        return outcome, QuantumState(state.layout, vec / nrm, validate=False), p0
    sel = keep.astype(float)
    m = state.data * sel[:, None] * sel[None, :]
    tr = np.trace(m).real
    if tr <= 1e-300:
        raise DimensionError("collapse onto a zero-probability branch")
    return outcome, QuantumState(state.layout, m / tr, validate=False), p0


def threshold_impl(
    pi: ProjectiveImplementation, gamma: float, slack: float = THRESHOLD_SLACK
) -> np.ndarray:
    """Threshold projector: the sum of eigenprojectors with eigenvalue >= gamma.

    Boundary eigenvalues within `slack` of gamma are accepted, so a
    threshold sitting exactly on an eigenvalue (like 1/2) does not flap.
    """
    if not 0.0 <= gamma <= 1.0:
        raise DimensionError("gamma must be in [0, 1]")
    acc = np.zeros((pi.dim, pi.dim), dtype=np.complex128)
    for p, proj in zip(pi.eigenvalues, pi.projectors):
        if p >= gamma - slack:
            acc += proj
    return acc


def ti_projector(povm: BinaryPovm, gamma: float) -> np.ndarray:
    return threshold_impl(proj_impl(povm), gamma)


# ---------------------------------------------------------------------------
# controlled projection
# ---------------------------------------------------------------------------


class ControlledProjection:
    """A coin-indexed family of projectors with a distribution over coins.

    Offers both the explicit control-register projector sum_r |r><r| (x) P_r
    and the equivalent mixture POVM P_D = sum_r Pr[r] P_r.
    """

    def __init__(self, items: Sequence[tuple[float, object, np.ndarray]], cap: int = COIN_CAP):
        if len(items) == 0:
            raise DimensionError("empty projector family")
        if len(items) > cap:
            raise ResourceLimitError(f"coin space {len(items)} exceeds cap {cap}")
        total = sum(p for p, _, _ in items)
        if abs(total - 1.0) > 1e-9:
            raise DimensionError(f"coin probabilities sum to {total}, not 1")
        dim = np.asarray(items[0][2]).shape[0]
        norm_items = []
        for prob, label, proj in items:
            proj = np.asarray(proj, dtype=np.complex128)
            if proj.shape != (dim, dim):
                raise DimensionError("family projectors must share one dimension")
            norm_items.append((float(prob), label, proj))
        self.items: tuple[tuple[float, object, np.ndarray], ...] = tuple(norm_items)
        self.dim = dim

    def mixture(self) -> BinaryPovm:
        acc = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for prob, _, proj in self.items:
            acc += prob * proj
        return BinaryPovm(acc)

    def sample(self, rng: np.random.Generator) -> tuple[object, np.ndarray]:
        probs = np.array([p for p, _, _ in self.items])
        k = int(rng.choice(len(self.items), p=probs / probs.sum()))
        return self.items[k][1], self.items[k][2]

    def control_projector(self) -> np.ndarray:
        """sum_r |r><r| (x) P_r over (control, system); control dim = #coins padded."""
        nc = 1 << max(1, (len(self.items) - 1).bit_length())
        if nc * self.dim > EXACT_DIM_CAP:
            raise ResourceLimitError("explicit control form exceeds the dense cap")
        out = np.zeros((nc * self.dim, nc * self.dim), dtype=np.complex128)
        for r, (_, _, proj) in enumerate(self.items):
            out[r * self.dim : (r + 1) * self.dim, r * self.dim : (r + 1) * self.dim] = proj
        return out

    def measure_with_control(
        self, state: QuantumState, rng: np.random.Generator
    ) -> tuple[int, QuantumState]:
        """Explicit-control measurement: coin register in superposition sqrt(p_r)|r>,
        controlled projection applied, control discarded."""
        nc = 1 << max(1, (len(self.items) - 1).bit_length())
        amps = np.zeros(nc, dtype=np.complex128)
        for r, (prob, _, _) in enumerate(self.items):
            amps[r] = math.sqrt(prob)
        coin_layout = RegisterLayout.of(("cproj_coin", nc.bit_length() - 1))
        coin = QuantumState(coin_layout, amps, validate=False)
        joint = coin.tensor(state)
        bit, post, _ = measure_binary(joint, self.control_projector(), rng)
        system = partial_trace(post, [n for n, _ in state.layout.registers])
        return bit, system


def controlled_projection(
    family: Sequence[tuple[float, object, np.ndarray]], cap: int = COIN_CAP
) -> ControlledProjection:
    return ControlledProjection(family, cap=cap)


# ---------------------------------------------------------------------------
# quantum programs and goodness tests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Evaluator:
    """Circuit family evaluating a quantum program on classical inputs.

    The full layout starts with the program registers; the remaining
    registers are ancillas assumed |0> when an operator is assembled.
    build_ops(x, oracles) yields the coherent evaluation circuit for input
    x, and accept_value(x, fx) is the packed content of output_regs that
    counts as answering fx (a validity flag convention is up to the
    builder).
    """

    layout: RegisterLayout
    program_regs: tuple[str, ...]
    output_regs: tuple[str, ...]
    build_ops: Callable[[int, Mapping[str, InstrumentedOracle]], list[Op]]
    accept_value: Callable[[int, int], int]
    oracle_slots: tuple[str, ...] = ()

    def __post_init__(self):
        names = self.layout.names()
        if names[: len(self.program_regs)] != tuple(self.program_regs):
            raise DimensionError("program registers must be the leading registers of the layout")

    @property
    def program_bits(self) -> int:
        return sum(self.layout.size(r) for r in self.program_regs)

    @property
    def ancilla_bits(self) -> int:
        return self.layout.total_qubits - self.program_bits

    @property
    def output_bits(self) -> int:
        return sum(self.layout.size(r) for r in self.output_regs)

    def output_values(self, layout: RegisterLayout | None = None) -> np.ndarray:
        """Packed output-register value per flat index (first listed = MSB); cached."""
        layout = layout or self.layout
        key = (layout, self.output_regs)
        arr = _OUTPUT_VALUE_CACHE.get(key)
        if arr is None:
            from .oracles import register_values

            arr = np.zeros(layout.dim, dtype=np.int64)
            for reg in self.output_regs:
                arr = (arr << layout.size(reg)) | register_values(layout, reg)
            arr.flags.writeable = False
            _OUTPUT_VALUE_CACHE[key] = arr
        return arr

    def accept_mask(
        self, accepted: int | np.ndarray, layout: RegisterLayout | None = None
    ) -> np.ndarray:
        """Boolean mask over flat indices whose output value is accepted.

        A different layout may be supplied when the evaluator's registers
        live inside a larger joint state.
        """
        vals = self.output_values(layout)
        if isinstance(accepted, (int, np.integer)):
            return vals == int(accepted)
        lookup = np.asarray(accepted, dtype=bool)
        return lookup[vals]


@dataclass
class QuantumProgram:
    """A quantum state together with its evaluation circuit family."""

    state: QuantumState
    evaluator: Evaluator
    oracles: dict[str, InstrumentedOracle] = field(default_factory=dict)

    def resolved_oracles(
        self, override: Mapping[str, InstrumentedOracle] | None = None
    ) -> dict[str, InstrumentedOracle]:
        out = dict(self.oracles)
        if override:
            out.update(override)
        return out


@dataclass
class PirateOutput:
    """A bipartite state over registers reg1/reg2 with one evaluator per side."""

    state: QuantumState
    reg1: str
    reg2: str
    evaluator1: Evaluator
    evaluator2: Evaluator
    oracles: dict[str, InstrumentedOracle] = field(default_factory=dict)

    def side(self, which: int) -> tuple[str, Evaluator]:
        if which == 1:
            return self.reg1, self.evaluator1
        if which == 2:
            return self.reg2, self.evaluator2
        raise DimensionError("side must be 1 or 2")


def _embedding_columns(evaluator: Evaluator) -> np.ndarray:
    d = 1 << evaluator.program_bits
    full = evaluator.layout.dim
    cols = np.zeros((full, d), dtype=np.complex128)
    cols[np.arange(d) << evaluator.ancilla_bits, np.arange(d)] = 1.0
    return cols


def goodness_povm(
    prog: QuantumProgram,
    f: ClassicalFunction,
    dist: Sequence[float] | None = None,
    oracles: Mapping[str, InstrumentedOracle] | None = None,
) -> BinaryPovm:
    """The mixed goodness operator P_D on the program register.

    P_D = sum_x Pr_D[x] U_x^dag V_{f(x)} U_x with ancillas conjugated
    through; Tr[P_D rho] is the program's average success probability on
    inputs drawn from D (uniform when dist is None).
    """
    ev = prog.evaluator
    weights = _input_weights(f.domain, dist)
    resolved = prog.resolved_oracles(oracles)
    acc = np.zeros((1 << ev.program_bits,) * 2, dtype=np.complex128)
    base = _embedding_columns(ev)
    for x, w in enumerate(weights):
        if w == 0.0:
            continue
        cols = run_ops_batch(base, ev.layout, ev.build_ops(x, resolved))
        kept = cols[ev.accept_mask(ev.accept_value(x, f(x)))]
        acc += w * (kept.conj().T @ kept)
    return BinaryPovm(acc)


def goodness_povm_predicate(
    prog: QuantumProgram,
    predicate: "Predicate",
    oracles: Mapping[str, InstrumentedOracle] | None = None,
) -> BinaryPovm:
    """Goodness operator for a general predicate over random coins.

    P = sum_r Pr[r] U_{x(r)}^dag V_r U_{x(r)} where V_r projects the output
    registers onto the set the predicate accepts under coin r.
    """
    ev = prog.evaluator
    resolved = prog.resolved_oracles(oracles)
    acc = np.zeros((1 << ev.program_bits,) * 2, dtype=np.complex128)
    base = _embedding_columns(ev)
    for w, r in predicate.coins:
        if w == 0.0:
            continue
        x = predicate.input_for(r)
        cols = run_ops_batch(base, ev.layout, ev.build_ops(x, resolved))
        kept = cols[ev.accept_mask(predicate.output_mask(r))]
        acc += w * (kept.conj().T @ kept)
    return BinaryPovm(acc)


def _input_weights(domain: int, dist: Sequence[float] | None) -> np.ndarray:
    if dist is None:
        return np.full(domain, 1.0 / domain)
    w = np.asarray(dist, dtype=float)
    if w.shape != (domain,) or abs(w.sum() - 1.0) > 1e-9 or w.min() < 0:
        raise DimensionError("input distribution must be a probability vector over the domain")
    return w


def goodness_family(
    prog: QuantumProgram,
    f: ClassicalFunction,
    dist: Sequence[float] | None = None,
    oracles: Mapping[str, InstrumentedOracle] | None = None,
) -> ControlledProjection:
    """The per-input projector family whose mixture is the goodness POVM."""
    ev = prog.evaluator
    weights = _input_weights(f.domain, dist)
    resolved = prog.resolved_oracles(oracles)
    base = _embedding_columns(ev)
    items = []
    for x, w in enumerate(weights):
        if w == 0.0:
            continue
        cols = run_ops_batch(base, ev.layout, ev.build_ops(x, resolved))
        kept = cols[ev.accept_mask(ev.accept_value(x, f(x)))]
        items.append((float(w), x, kept.conj().T @ kept))
    return ControlledProjection(items)


@dataclass(frozen=True)
class Predicate:
    """Randomness space plus a per-coin acceptance test on the output registers.

    output_mask(r) is a boolean mask over packed output-register values;
    each induced checker is a (diagonal) projector.
    """

    coins: tuple[tuple[float, object], ...]
    input_for: Callable[[object], int]
    output_mask: Callable[[object], np.ndarray]

    def __post_init__(self):
        total = sum(p for p, _ in self.coins)
        if abs(total - 1.0) > 1e-9:
            raise DimensionError("predicate coin probabilities must sum to 1")


@dataclass(frozen=True)
class CryptoApplication:
    """A sampler producing (f, aux_f, secret) plus its intended-functionality predicate."""

    name: str
    sampler: Callable[[np.random.Generator], tuple[object, object, object]]
    functionality: Callable[[object], Predicate]
    tolerance: float = 0.0


def equality_predicate(f: ClassicalFunction, ev: Evaluator, dist: Sequence[float] | None = None) -> Predicate:
    """The output-equality test expressed as a predicate over input coins."""
    weights = _input_weights(f.domain, dist)

    def mask_for(x) -> np.ndarray:
        accepted = ev.accept_value(x, f(int(x)))
        if isinstance(accepted, np.ndarray):
            return accepted
        m = np.zeros(1 << ev.output_bits, dtype=bool)
        m[accepted] = True
        return m

    coins = tuple((float(w), x) for x, w in enumerate(weights) if w > 0)
    return Predicate(coins, lambda r: int(r), mask_for)


# ---------------------------------------------------------------------------
# joint threshold measurement
# ---------------------------------------------------------------------------


def embed_operator(layout: RegisterLayout, register: str, op: np.ndarray) -> np.ndarray:
    """Extend an operator on one register by identity on every other register."""
    if layout.dim > EXACT_DIM_CAP:
        raise ResourceLimitError("dense operator embedding capped at 2^12 total dimension")
    acc = np.ones((1, 1), dtype=np.complex128)
    for name, size in layout.registers:
        acc = np.kron(acc, op if name == register else np.eye(1 << size))
    return acc


def joint_threshold_measure(
    pirate: PirateOutput,
    povm1: BinaryPovm,
    povm2: BinaryPovm,
    gamma: float,
    rng: np.random.Generator,
) -> tuple[int, int, QuantumState]:
    """Apply TI_gamma (x) TI_gamma to the two sides of a bipartite state.

    The embedded threshold projectors commute, so the two binary
    measurements are order-independent; this is asserted on every call.
    Returns both outcomes (0 = accepted) and the collapsed joint state.
    """
    state = pirate.state
    t1 = embed_operator(state.layout, pirate.reg1, ti_projector(povm1, gamma))
    t2 = embed_operator(state.layout, pirate.reg2, ti_projector(povm2, gamma))
    p_12 = _joint_accept_prob(state, t1, t2)
    p_21 = _joint_accept_prob(state, t2, t1)
    assert abs(p_12 - p_21) <= 1e-9, "threshold projectors failed to commute"
    b1, state, _ = measure_binary(state, t1, rng)
    b2, state, _ = measure_binary(state, t2, rng)
    return b1, b2, state


def _joint_accept_prob(state: QuantumState, first: np.ndarray, second: np.ndarray) -> float:
    if state.pure:
        v = second @ (first @ state.data)
        return float(np.real(np.vdot(v, v)))
    m = second @ first @ state.data @ first.conj().T @ second.conj().T
    return float(np.real(np.trace(m)))


def joint_threshold_trace(
    pirate: PirateOutput, povm1: BinaryPovm, povm2: BinaryPovm, gamma: float
) -> float:
    """Exact Tr[(TI (x) TI) rho]: the probability both sides test gamma-good."""
    state = pirate.state
    t1 = embed_operator(state.layout, pirate.reg1, ti_projector(povm1, gamma))
    t2 = embed_operator(state.layout, pirate.reg2, ti_projector(povm2, gamma))
    return _joint_accept_prob(state, t1, t2)


# ---------------------------------------------------------------------------
# shift distance and the sequential estimator
# ---------------------------------------------------------------------------


def _as_distribution(d) -> tuple[np.ndarray, np.ndarray]:
    """Normalize samples or (value, prob) pairs into sorted support + weights."""
    arr = np.asarray(d, dtype=float)
    if arr.ndim == 1:
        vals, counts = np.unique(arr, return_counts=True)
        return vals, counts / counts.sum()
    if arr.ndim == 2 and arr.shape[1] == 2:
        order = np.argsort(arr[:, 0])
        vals = arr[order, 0]
        probs = arr[order, 1]
        if abs(probs.sum() - 1.0) > 1e-9:
            raise DimensionError("distribution weights must sum to 1")
        return vals, probs
    raise DimensionError("distribution must be samples or (value, prob) rows")


def shift_distance(d0, d1, eps: float) -> float:
    """Smallest delta with Pr[D0<=x] <= Pr[D1<=x+eps]+delta and symmetrically.

    Computed exactly over the merged finite support; the supremum over real
    x of each one-sided gap is attained right after a jump of either CDF.
    """
    if eps < 0:
        raise DimensionError("eps must be nonnegative")
    v0, p0 = _as_distribution(d0)
    v1, p1 = _as_distribution(d1)

    def cdf(vals, probs, x):
        return float(probs[vals <= x + 1e-12].sum())

    def one_side(va, pa, vb, pb) -> float:
        worst = 0.0
        for c in np.concatenate([va, vb - eps]):
            gap = cdf(va, pa, c) - cdf(vb, pb, c + eps)
            worst = max(worst, gap)
        return worst

    return max(one_side(v0, p0, v1, p1), one_side(v1, p1, v0, p0))


def api_repetitions(eps: float, delta: float, c: float = 2.0) -> int:
    if not (0 < eps < 1 and 0 < delta < 1):
        raise DimensionError("eps and delta must lie in (0, 1)")
    return math.ceil(c * math.log(2.0 / delta) / (eps * eps))


def sampled_api(
    state: QuantumState,
    family: ControlledProjection,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    c: float = 2.0,
) -> tuple[float, QuantumState]:
    """Sequential fresh-coin estimate of the projective implementation.

    Performs t = ceil(c ln(2/delta)/eps^2) binary projective measurements
    with independently drawn coins and returns the empirical acceptance
    fraction together with the post-measurement state. Approximates the
    exact projective implementation in shift distance and is empirically
    (eps, delta)-almost projective.
    """
    t = api_repetitions(eps, delta, c)
    accepted = 0
    for _ in range(t):
        _, proj = family.sample(rng)
        bit, state, _ = measure_binary(state, proj, rng)
        accepted += 1 - bit
    return accepted / t, state


def sampled_threshold(
    state: QuantumState,
    family: ControlledProjection,
    gamma: float,
    eps: float,
    delta: float,
    rng: np.random.Generator,
) -> tuple[int, float, QuantumState]:
    """Approximate threshold test: outcome 0 iff the sampled estimate reaches gamma."""
    p_hat, post = sampled_api(state, family, eps, delta, rng)
    return (0 if p_hat >= gamma - THRESHOLD_SLACK else 1), p_hat, post


def measurement_report(gamma: float, trace: float | None, shots: int, ci95) -> dict:
    return {
        "gamma": gamma,
        "trace": trace,
        "shots": shots,
        "ci95": [float(ci95[0]), float(ci95[1])] if ci95 is not None else None,
    }
