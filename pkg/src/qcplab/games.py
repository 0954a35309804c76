"""Executable security-game harnesses.

Three games: the direct-product game on subspace states, the learning game
(oracle access to f, output program tested gamma-good), and the anti-piracy
game (one program in, two register programs out, both tested gamma-good).
Adversaries and pirates come from a closed strategy library keyed by name;
anything implementing the same callable shape can be plugged in.

Win probabilities are computed exactly (threshold traces) whenever the
joint dimension allows, with Monte Carlo sampling layered on top for the
reported win counts; larger instances fall back to the sequential sampled
threshold measurement, which makes real instrumented oracle queries and is
therefore also the substrate for query extraction and the case-split probe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import cp
from .errors import DimensionError, ProtocolViolationError
from .f2 import F2Subspace, F2Vector, rand_subspace
from .measure import (
    BinaryPovm,
    Evaluator,
    PirateOutput,
    QuantumProgram,
    api_repetitions,
    goodness_povm,
    joint_threshold_trace,
    measure_binary_mask,
    measurement_report,
    proj_impl,
    threshold_impl,
    ti_projector,
)
from .oracles import (
    ClassicalFunction,
    InstrumentedOracle,
    LoadConstant,
    OracleCall,
    TableXor,
    bot_oracle,
    classical_gate,
    invert_ops,
    membership_oracle,
    run_ops,
    transcript_rows,
)
from .qsim import (
    QuantumState,
    RegisterLayout,
    hadamard_all,
    measure_register,
    partial_trace,
    prepare_subspace_state,
    rename_register,
)
from .runner import ci95, run_trials, trial_rng

EXACT_JOINT_CAP = 1 << 12


@dataclass(frozen=True)
class GameConfig:
    lam: int = 4
    domain: int = 4
    value_bits: int = 1
    gamma: float = 0.5
    trials: int = 200
    seed: int = 0
    adversary: str = ""
    eps: float = 0.1
    delta: float = 0.05
    nonnegligible: float = 0.01  # branch-classification threshold

    def __post_init__(self):
        if self.trials < 1:
            raise DimensionError("trials must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise DimensionError("gamma must lie in (0, 1]")


@dataclass
class GameReport:
    game: str
    adversary: str
    wins: int
    trials: int
    win_rate: float
    ci95: tuple[float, float]
    derived_expectation: float | None
    diagnostics: dict = field(default_factory=dict)
    transcripts: list[tuple] = field(default_factory=list)

    def results(self) -> dict:
        return {
            "wins": self.wins,
            "trials": self.trials,
            "win_rate": self.win_rate,
            "ci95": [self.ci95[0], self.ci95[1]],
            "derived_expectation": self.derived_expectation,
            "diagnostics": self.diagnostics,
        }


def _finish(game, name, flags, trials, derived, diagnostics, transcripts=None) -> GameReport:
    wins = int(sum(flags))
    return GameReport(
        game=game,
        adversary=name,
        wins=wins,
        trials=trials,
        win_rate=wins / trials,
        ci95=ci95(wins, trials),
        derived_expectation=derived,
        diagnostics=diagnostics,
        transcripts=transcripts or [],
    )


# ---------------------------------------------------------------------------
# direct-product game
# ---------------------------------------------------------------------------


class DirectProductChallenge:
    """What the adversary legitimately holds: the token and both membership oracles."""

    def __init__(self, token: QuantumState, oracle_a: InstrumentedOracle,
                 oracle_dual: InstrumentedOracle, secret: F2Subspace):
        self.token = token
        self.oracle_a = oracle_a
        self.oracle_dual = oracle_dual
        self._secret = secret

    @property
    def lam(self) -> int:
        return self._secret.n

    def secret_subspace(self):
        raise ProtocolViolationError("the hidden subspace is not part of the adversary's view")


def _dp_give_up(ch: DirectProductChallenge, rng) -> tuple[F2Vector, F2Vector]:
    return F2Vector.zero(ch.lam), F2Vector.zero(ch.lam)


def _dp_measure_guess(ch, rng):
    u = cp.sign_token_bit(ch.token, 0, rng)
    v = F2Vector(ch.lam, int(rng.integers(0, 1 << ch.lam)))
    return u, v


def _dp_both_token(ch, rng):
    reg = ch.token.layout.names()[0]
    outcome, post, _ = measure_register(ch.token, reg, rng)
    u = F2Vector(ch.lam, outcome)
    post = hadamard_all(post, reg)
    outcome2, _, _ = measure_register(post, reg, rng)
    return u, F2Vector(ch.lam, outcome2)


def _query_membership(gate: InstrumentedOracle, v: int) -> int:
    """Classical query through the instrumented gate (counts and records)."""
    lam = gate.field_width("v")
    layout = RegisterLayout.of(("v", lam), ("flag", 1))
    st = QuantumState.basis(layout, v << 1)
    st = run_ops(st, [OracleCall.bind(gate, "flag", v="v")])
    return int(np.argmax(np.abs(st.data))) & 1


def _dp_scan_guess(ch, rng):
    """Classically scan the primal membership oracle for some nonzero member,
    then guess the dual vector uniformly; the scan always succeeds, so the
    win rate is the dual guessing probability alone."""
    u = F2Vector.zero(ch.lam)
    for v in range(1, 1 << ch.lam):
        if _query_membership(ch.oracle_a, v):
            u = F2Vector(ch.lam, v)
            break
    return u, F2Vector(ch.lam, int(rng.integers(0, 1 << ch.lam)))


def _dp_cheat(ch, rng):
    ch.secret_subspace()


def _dp_closed_form(lam: int) -> float:
    half = 1 << (lam // 2)
    return (1 - 1 / half) * ((half - 1) / (1 << lam))


DIRECT_PRODUCT_ADVERSARIES = {
    "give-up": (_dp_give_up, lambda cfg: 0.0),
    "measure-guess": (_dp_measure_guess, lambda cfg: _dp_closed_form(cfg.lam)),
    "both-token": (_dp_both_token, lambda cfg: _dp_closed_form(cfg.lam)),
    "scan-guess": (_dp_scan_guess,
                   lambda cfg: ((1 << (cfg.lam // 2)) - 1) / (1 << cfg.lam)),
    "cheat-sk": (_dp_cheat, None),
}


def run_direct_product_game(cfg: GameConfig, adversary: str | None = None,
                            threads: int | None = None) -> GameReport:
    name = adversary or cfg.adversary
    try:
        strategy, closed = DIRECT_PRODUCT_ADVERSARIES[name]
    except KeyError:
        raise DimensionError(f"unknown direct-product adversary {name!r}") from None
    if cfg.lam % 2:
        raise DimensionError("lambda must be even")

    def one(i: int):
        rng = trial_rng(cfg.seed, i)
        A = rand_subspace(cfg.lam, cfg.lam // 2, rng)
        ua = membership_oracle(A, "U_A")
        ua.add_flag_set("A_nonzero", "v", _nonzero_indicator(A))
        uad = membership_oracle(A.dual(), "U_Adual")
        ch = DirectProductChallenge(prepare_subspace_state(A, "v"), ua, uad, A)
        u, v = strategy(ch, rng)
        win = (not u.is_zero()) and (not v.is_zero()) and A.member(u) and A.dual().member(v)
        return win, transcript_rows(i, ua, uad)

    outcomes = run_trials(cfg.trials, one, threads)
    flags = [w for w, _ in outcomes]
    rows = [r for _, rs in outcomes for r in rs]
    derived = closed(cfg) if closed else None
    return _finish("direct-product", name, flags, cfg.trials, derived,
                   {"lambda": cfg.lam}, rows)


def _nonzero_indicator(space: F2Subspace) -> np.ndarray:
    mask = space.indicator()
    mask[0] = False
    return mask


# ---------------------------------------------------------------------------
# program builders shared by the learning and anti-piracy strategy libraries
# ---------------------------------------------------------------------------


def table_program(table, value_bits: int, prefix: str = "") -> QuantumProgram:
    """A classical table as a quantum program on a placeholder qubit."""
    m = value_bits
    table = tuple(int(t) for t in table)
    p, out = f"{prefix}p", f"{prefix}out"
    layout = RegisterLayout.of((p, 1), (out, 1 + m))

    def build_ops(x, oracles):
        return [LoadConstant(out, (1 << m) | table[x])]

    ev = Evaluator(layout, (p,), (out,), build_ops, lambda x, fx: (1 << m) | fx)
    return QuantumProgram(QuantumState.basis(RegisterLayout.of((p, 1))), ev)


def dummy_program(value_bits: int, prefix: str = "") -> QuantumProgram:
    """A program that always answers bottom; never gamma-good for gamma > 0."""
    m = value_bits
    p, out = f"{prefix}p", f"{prefix}out"
    layout = RegisterLayout.of((p, 1), (out, 1 + m))
    ev = Evaluator(layout, (p,), (out,), lambda x, oracles: [], lambda x, fx: (1 << m) | fx)
    return QuantumProgram(QuantumState.basis(RegisterLayout.of((p, 1))), ev)


def good_or_dummy_evaluator(f: ClassicalFunction, prefix: str) -> Evaluator:
    """One-qubit program basis: |0> computes f perfectly, |1> answers bottom."""
    m = f.value_bits
    p, out = f"{prefix}p", f"{prefix}out"
    layout = RegisterLayout.of((p, 1), (out, 1 + m))

    def build_ops(x, oracles):
        return [TableXor((p,), out, ((1 << m) | f(x), 0))]

    return Evaluator(layout, (p,), (out,), build_ops, lambda x, fx: (1 << m) | fx)


# ---------------------------------------------------------------------------
# learning game
# ---------------------------------------------------------------------------


def _classical_query(gate: InstrumentedOracle, x: int) -> int:
    """Query the instrumented oracle classically: basis state in, basis state out."""
    layout = RegisterLayout.of(("x", gate.field_width("x")), ("out", gate.out_bits))
    st = QuantumState.basis(layout, x << gate.out_bits)
    st = run_ops(st, [OracleCall.bind(gate, "out", x="x")])
    return int(np.argmax(np.abs(st.data))) & ((1 << gate.out_bits) - 1)


def _learn_table_copy(gate, domain, value_bits, gamma, rng) -> QuantumProgram:
    table = [_classical_query(gate, x) for x in range(domain)]
    return table_program(table, value_bits)


def _learn_zero_query(gate, domain, value_bits, gamma, rng) -> QuantumProgram:
    table = [int(rng.integers(0, 1 << value_bits)) for _ in range(domain)]
    return table_program(table, value_bits)


def _learn_dummy(gate, domain, value_bits, gamma, rng) -> QuantumProgram:
    return dummy_program(value_bits)


def _zero_query_closed(cfg: GameConfig) -> float:
    """Pr[Binomial(N, 2^-m)/N >= gamma] for the guessing adversary."""
    n, p = cfg.domain, 2.0 ** (-cfg.value_bits)
    k_min = math.ceil(cfg.gamma * n - 1e-9)
    return sum(math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(k_min, n + 1))


LEARNING_ADVERSARIES = {
    "table-copy": (_learn_table_copy, lambda cfg: 1.0),
    "zero-query-guess": (_learn_zero_query, _zero_query_closed),
    "dummy": (_learn_dummy, lambda cfg: 0.0),
}


def run_learning_game(cfg: GameConfig, adversary: str | None = None,
                      threads: int | None = None) -> GameReport:
    name = adversary or cfg.adversary
    try:
        strategy, closed = LEARNING_ADVERSARIES[name]
    except KeyError:
        raise DimensionError(f"unknown learning adversary {name!r}") from None

    def one(i: int):
        rng = trial_rng(cfg.seed, i)
        f = ClassicalFunction.random(cfg.domain, cfg.value_bits, rng)
        gate = classical_gate(f)
        gate.add_flag_set("domain", "x", np.ones(cfg.domain, dtype=bool))
        prog = strategy(gate, cfg.domain, cfg.value_bits, cfg.gamma, rng)
        povm = goodness_povm(prog, f)
        ti = ti_projector(povm, cfg.gamma)
        trace = float(np.real(np.trace(ti @ prog.state.density())))
        win = rng.random() < trace
        return win, trace, gate.queries, transcript_rows(i, gate)

    outcomes = run_trials(cfg.trials, one, threads)
    flags = [w for w, _, _, _ in outcomes]
    traces = [t for _, t, _, _ in outcomes]
    queries = [q for _, _, q, _ in outcomes]
    rows = [r for _, _, _, rs in outcomes for r in rs]
    diag = {
        "mean_exact_trace": float(np.mean(traces)),
        "mean_queries": float(np.mean(queries)),
        "gamma": cfg.gamma,
        "measurement": "exact-ti",
    }
    derived = closed(cfg) if closed else None
    return _finish("learning", name, flags, cfg.trials, derived, diag, rows)


# ---------------------------------------------------------------------------
# anti-piracy game: pirate library
# ---------------------------------------------------------------------------


def pirate_honest_forward(prog: cp.CpProgram, f, rng) -> PirateOutput:
    """Keeps the real program in the first register, a dud in the second."""
    ev1 = cp.make_cp_evaluator(prog.lam, prog.domain.bit_length() - 1,
                               prog.value_bits, prefix="r1_")
    dud = dummy_program(prog.value_bits, prefix="r2_")
    state = rename_register(prog.state, "v", "r1_v").tensor(dud.state)
    return PirateOutput(state, "r1_v", "r2_p", ev1, dud.evaluator, dict(prog.oracles))


def pirate_state_split(prog: cp.CpProgram, f, rng) -> PirateOutput:
    """Coin-controlled swap split: (|0>|A>|0> + |1>|0>|A>)/sqrt2 with honest circuits."""
    lam = prog.lam
    vecA = prog.state.data
    layout = RegisterLayout.of(("coin", 1), ("r1_v", lam), ("r2_v", lam))
    dim_v = 1 << lam
    joint = np.zeros(layout.dim, dtype=np.complex128)
    joint[np.arange(dim_v) * dim_v] += vecA / math.sqrt(2)          # coin 0: (r1=A, r2=0)
    base = (1 << (2 * lam))                                          # coin 1 block
    joint[base + np.arange(dim_v)] += vecA / math.sqrt(2)            # coin 1: (r1=0, r2=A)
    state = QuantumState(layout, joint, validate=False)
    xbits = prog.domain.bit_length() - 1
    ev1 = cp.make_cp_evaluator(lam, xbits, prog.value_bits, prefix="r1_")
    ev2 = cp.make_cp_evaluator(lam, xbits, prog.value_bits, prefix="r2_")
    return PirateOutput(state, "r1_v", "r2_v", ev1, ev2, dict(prog.oracles))


def pirate_swap_toy(prog: cp.CpProgram, f: ClassicalFunction, rng) -> PirateOutput:
    """(|P>|D> + |D>|P>)/sqrt2 over perfect/dud table programs (diagnostic toy)."""
    layout = RegisterLayout.of(("r1_p", 1), ("r2_p", 1))
    vec = np.zeros(4, dtype=np.complex128)
    vec[0b01] = vec[0b10] = 1 / math.sqrt(2)
    state = QuantumState(layout, vec, validate=False)
    return PirateOutput(state, "r1_p", "r2_p",
                        good_or_dummy_evaluator(f, "r1_"), good_or_dummy_evaluator(f, "r2_"))


def pirate_correlated_toy(prog: cp.CpProgram, f: ClassicalFunction, rng) -> PirateOutput:
    """sqrt(1/3)|PP> + sqrt(2/3)|DD> (diagnostic toy)."""
    layout = RegisterLayout.of(("r1_p", 1), ("r2_p", 1))
    vec = np.zeros(4, dtype=np.complex128)
    vec[0b00] = math.sqrt(1 / 3)
    vec[0b11] = math.sqrt(2 / 3)
    state = QuantumState(layout, vec, validate=False)
    return PirateOutput(state, "r1_p", "r2_p",
                        good_or_dummy_evaluator(f, "r1_"), good_or_dummy_evaluator(f, "r2_"))


def pirate_oracle_free(prog: cp.CpProgram, f: ClassicalFunction, rng) -> PirateOutput:
    """Diagnostic: first register holds a plain f-table that never queries oracles."""
    p1 = table_program(f.table, f.value_bits, prefix="r1_")
    p2 = dummy_program(prog.value_bits, prefix="r2_")
    state = p1.state.tensor(p2.state)
    return PirateOutput(state, "r1_p", "r2_p", p1.evaluator, p2.evaluator, dict(prog.oracles))


# name -> (builder, needs_function, closed_form, product_state)
PIRATES = {
    "honest-forward": (pirate_honest_forward, False, lambda cfg: 0.0, True),
    "state-split": (pirate_state_split, False, None, False),
    "swap-toy": (pirate_swap_toy, True, lambda cfg: 0.0, False),
    "correlated-toy": (pirate_correlated_toy, True, lambda cfg: 1 / 3, False),
    "oracle-free-table": (pirate_oracle_free, True, lambda cfg: 0.0, True),
}


def side_program(pirate: PirateOutput, which: int) -> QuantumProgram:
    reg, ev = pirate.side(which)
    reduced = partial_trace(pirate.state, [reg])
    return QuantumProgram(reduced, ev, dict(pirate.oracles))


def side_povm(pirate: PirateOutput, which: int, f: ClassicalFunction,
              oracles=None) -> BinaryPovm:
    return goodness_povm(side_program(pirate, which), f, oracles=oracles)


def anti_piracy_trace(pirate: PirateOutput, f: ClassicalFunction, gamma: float) -> float:
    """Exact Pr[both sides test gamma-good] = Tr[(TI (x) TI) sigma]."""
    return joint_threshold_trace(
        pirate, side_povm(pirate, 1, f), side_povm(pirate, 2, f), gamma
    )


def run_anti_piracy_game(cfg: GameConfig, pirate: str | None = None,
                         threads: int | None = None) -> GameReport:
    name = pirate or cfg.adversary
    try:
        builder, needs_f, closed, product = PIRATES[name]
    except KeyError:
        raise DimensionError(f"unknown pirate {name!r}") from None

    def one(i: int):
        rng = trial_rng(cfg.seed, i)
        sk = cp.setup(cfg.lam, rng)
        f = ClassicalFunction.random(cfg.domain, cfg.value_bits, rng)
        prog = cp.generate(sk, f, rng)
        out = builder(prog, f if needs_f else None, rng)
        if out.state.layout.dim <= EXACT_JOINT_CAP:
            trace = anti_piracy_trace(out, f, cfg.gamma)
            return rng.random() < trace, trace, "exact-joint"
        if product:
            t1 = side_povm(out, 1, f)
            t2 = side_povm(out, 2, f)
            tv1 = float(np.real(np.trace(
                ti_projector(t1, cfg.gamma) @ side_program(out, 1).state.density())))
            tv2 = float(np.real(np.trace(
                ti_projector(t2, cfg.gamma) @ side_program(out, 2).state.density())))
            trace = tv1 * tv2
            return rng.random() < trace, trace, "exact-product"
        b1, _, joint = sequential_threshold_on(
            out, 1, f, cfg.gamma - cfg.eps, cfg.eps, cfg.delta, rng)
        out2 = PirateOutput(joint, out.reg1, out.reg2, out.evaluator1, out.evaluator2,
                            out.oracles)
        b2, _, _ = sequential_threshold_on(
            out2, 2, f, cfg.gamma - cfg.eps, cfg.eps, cfg.delta, rng)
        return (b1 == 0 and b2 == 0), None, "sampled-ati"

    outcomes = run_trials(cfg.trials, one, threads)
    flags = [w for w, _, _ in outcomes]
    exact = [t for _, t, _ in outcomes if t is not None]
    diag = {
        "gamma": cfg.gamma,
        "measurement": outcomes[0][2] if outcomes else None,
        "mean_exact_trace": float(np.mean(exact)) if exact else None,
        "synthetic_strategy": needs_f,
        "joint_test": measurement_report(
            cfg.gamma,
            float(np.mean(exact)) if exact else None,
            cfg.trials,
            ci95(int(sum(flags)), cfg.trials),
        ),
    }
    derived = closed(cfg) if closed else None
    return _finish("anti-piracy", name, flags, cfg.trials, derived, diag)


# ---------------------------------------------------------------------------
# operational sequential measurement, extraction, case split
# ---------------------------------------------------------------------------


@dataclass
class HaltPlan:
    """Stop before the k-th application of the target oracle and measure its query."""

    target: InstrumentedOracle
    remaining: int
    fname: str = "v"


def _with_ancillas(joint: QuantumState, ev: Evaluator) -> QuantumState:
    missing = tuple(
        (n, s) for n, s in ev.layout.registers if n not in joint.layout.names()
    )
    if missing:
        joint = joint.tensor(QuantumState.basis(RegisterLayout(missing)))
    return joint


def _goodness_pass(joint, ev, oracles, f, x, rng, halt: HaltPlan | None):
    """One binary goodness measurement (forward, project, uncompute).

    Returns (bit or None, state, halted query value or None); bit is None
    only when the halt triggered inside this pass.
    """
    ops = ev.build_ops(x, oracles)
    plan = list(ops) + invert_ops(ops)
    bit = None
    for stage, op in enumerate(plan):
        if halt is not None and isinstance(op, OracleCall) and op.oracle is halt.target:
            halt.remaining -= 1
            if halt.remaining == 0:
                regname = op.binding(halt.fname)
                outcome, post, _ = measure_register(joint, regname, rng)
                return None, post, outcome
        joint = run_ops(joint, [op])
        if stage == len(ops) - 1:
            mask = ev.accept_mask(ev.accept_value(x, f(x)), joint.layout)
            bit, joint, _ = measure_binary_mask(joint, mask, rng)
    return bit, joint, None


def sequential_threshold_on(
    pirate: PirateOutput,
    which: int,
    f: ClassicalFunction,
    gamma: float,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    oracles=None,
) -> tuple[int, float, QuantumState]:
    """Sampled threshold measurement of one side, run operationally.

    Returns (outcome, estimate, joint state); outcome 0 means the side
    tested (approximately) gamma-good. The run makes real instrumented
    oracle queries on both the forward and uncompute passes.
    """
    _, ev = pirate.side(which)
    resolved = dict(pirate.oracles)
    if oracles:
        resolved.update(oracles)
    joint = _with_ancillas(pirate.state, ev)
    t = api_repetitions(eps, delta)
    coins = rng.integers(0, f.domain, size=t)
    accepted = 0
    for x in coins:
        bit, joint, _ = _goodness_pass(joint, ev, resolved, f, int(x), rng, None)
        accepted += 1 - bit
    p_hat = accepted / t
    return (0 if p_hat >= gamma - 1e-9 else 1), p_hat, joint


def _count_target_calls(ev: Evaluator, oracles, f, coins, target) -> int:
    total = 0
    for x in coins:
        ops = ev.build_ops(int(x), oracles)
        plan = list(ops) + invert_ops(ops)
        total += sum(1 for op in plan if isinstance(op, OracleCall) and op.oracle is target)
    return total


@dataclass
class ExtractionResult:
    ok: bool
    u: F2Vector | None
    v: F2Vector | None
    failure: str | None = None
    diagnostics: dict = field(default_factory=dict)


def extract_vectors_from_pirate(
    pirate: PirateOutput,
    f: ClassicalFunction,
    subspace: F2Subspace,
    gamma: float,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    halt_override: tuple[int, int] | None = None,
) -> ExtractionResult:
    """Halt each side's sampled threshold measurement at a random oracle query.

    The first side is interrupted at a uniformly chosen query to the second
    oracle (hoping for a dual vector), then the second side at a query to
    the first oracle (hoping for a primal vector). Success means both
    measured vectors are nonzero members of the right spaces.
    """
    if "o1" not in pirate.oracles or "o2" not in pirate.oracles:
        return ExtractionResult(False, None, None, "no-oracle-slots")
    o1, o2 = pirate.oracles["o1"], pirate.oracles["o2"]
    lam = subspace.n
    t = api_repetitions(eps, delta)

    def halted_side(which: int, target: InstrumentedOracle, k_forced: int | None):
        _, ev = pirate.side(which)
        coins = rng.integers(0, f.domain, size=t)
        total = _count_target_calls(ev, pirate.oracles, f, coins, target)
        if total == 0:
            return None, None
        k = k_forced if k_forced is not None else int(rng.integers(1, total + 1))
        return coins, HaltPlan(target, k)

    coins1, halt1 = halted_side(1, o2, halt_override[0] if halt_override else None)
    if halt1 is None:
        return ExtractionResult(False, None, None, "no-o2-queries-on-r1")
    joint = _with_ancillas(pirate.state, pirate.evaluator1)
    vvec = None
    for x in coins1:
        bit, joint, halted = _goodness_pass(
            joint, pirate.evaluator1, pirate.oracles, f, int(x), rng, halt1)
        if halted is not None:
            vvec = F2Vector(lam, halted)
            break
    if vvec is None:
        return ExtractionResult(False, None, None, "halt-miscounted")

    mid = PirateOutput(joint, pirate.reg1, pirate.reg2,
                       pirate.evaluator1, pirate.evaluator2, pirate.oracles)
    coins2, halt2 = halted_side(2, o1, halt_override[1] if halt_override else None)
    if halt2 is None:
        return ExtractionResult(False, None, vvec, "no-o1-queries-on-r2")
    joint = _with_ancillas(mid.state, pirate.evaluator2)
    uvec = None
    for x in coins2:
        bit, joint, halted = _goodness_pass(
            joint, pirate.evaluator2, pirate.oracles, f, int(x), rng, halt2)
        if halted is not None:
            uvec = F2Vector(lam, halted)
            break
    if uvec is None:
        return ExtractionResult(False, None, vvec, "halt-miscounted")

    ok = (not uvec.is_zero()) and (not vvec.is_zero()) \
        and subspace.member(uvec) and subspace.dual().member(vvec)
    return ExtractionResult(ok, uvec, vvec)


@dataclass
class ProbeResult:
    branch: str                      # "E1", "E2", or "extraction"
    traces: dict
    weights: dict
    queries: dict


def _flagged_weight_scan(pirate: PirateOutput, which: int, f: ClassicalFunction,
                         target_slot: str, flag_id: str) -> tuple[float, int]:
    """Exact average flagged query weight per goodness circuit (forward pass).

    Runs each input's evaluation circuit once on the pirate's initial state
    with transcripts on and averages the target oracle's flagged weight; no
    measurement is involved, so the scan is deterministic.
    """
    _, ev = pirate.side(which)
    target = pirate.oracles[target_slot]
    base = _with_ancillas(pirate.state, ev)
    total, calls = 0.0, 0
    for x in range(f.domain):
        target.reset_transcript()
        run_ops(base, ev.build_ops(x, pirate.oracles))
        recs = [r for r in target.transcript if r.flag_set == flag_id]
        total += sum(r.weight for r in recs)
        calls += len(recs)
    target.reset_transcript()
    return total / f.domain, calls // max(f.domain, 1)


def case_split_probe(
    pirate: PirateOutput,
    f: ClassicalFunction,
    gamma: float,
    eps: float,
    delta: float,
    nonnegligible: float = 0.01,
) -> ProbeResult:
    """Classify a pirate into the proof's branches by oracle substitution.

    The first side is re-measured with its second oracle replaced by the
    always-bottom oracle, the second side with its first oracle replaced;
    a side that stays good under substitution lands in the corresponding
    learning branch, otherwise the pirate must be feeding flagged vectors
    to both oracles and extraction applies.
    """
    if "o1" not in pirate.oracles or "o2" not in pirate.oracles:
        raise DimensionError("case split requires the scheme oracle slots")
    o1, o2 = pirate.oracles["o1"], pirate.oracles["o2"]
    bot1 = bot_oracle(o1.fields, o1.value_bits, "Obot1")
    bot2 = bot_oracle(o2.fields, o2.value_bits, "Obot2")

    def side_trace(which: int, oracles, g: float) -> float:
        prog = side_program(pirate, which)
        povm = goodness_povm(prog, f, oracles=oracles)
        ti = threshold_impl(proj_impl(povm), g)
        return float(np.real(np.trace(ti @ prog.state.density())))

    slack_gamma = max(gamma - 2 * eps, 0.0)
    traces = {
        "r1_full": side_trace(1, None, gamma),
        "r2_full": side_trace(2, None, gamma),
        "r1_sub": side_trace(1, {"o2": bot2}, slack_gamma),
        "r2_sub": side_trace(2, {"o1": bot1}, slack_gamma),
        "r1_sub_at_gamma": side_trace(1, {"o2": bot2}, gamma),
        "r2_sub_at_gamma": side_trace(2, {"o1": bot1}, gamma),
    }
    w1, n1 = _flagged_weight_scan(pirate, 1, f, "o2", "Adual_nonzero")
    w2, n2 = _flagged_weight_scan(pirate, 2, f, "o1", "A_nonzero")
    weights = {"r1_to_o2": w1, "r2_to_o1": w2}
    queries = {"r1_o2_calls_per_eval": n1, "r2_o1_calls_per_eval": n2}
    if traces["r1_sub"] > nonnegligible:
        branch = "E1"
    elif traces["r2_sub"] > nonnegligible:
        branch = "E2"
    else:
        branch = "extraction"
    return ProbeResult(branch, traces, weights, queries)
