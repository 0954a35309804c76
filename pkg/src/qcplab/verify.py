"""Built-in invariant suite behind the `verify` CLI subcommand.

Everything here is deterministic under a fixed master seed: trial rngs are
derived per (seed, stream, index), so two runs (at any worker count)
produce byte-identical reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import cd as cd_mod
from . import cp as cp_mod
from . import money as money_mod
from .f2 import all_subspaces, rand_subspace
from .games import (
    GameConfig,
    anti_piracy_trace,
    case_split_probe,
    pirate_correlated_toy,
    pirate_oracle_free,
    pirate_state_split,
    pirate_swap_toy,
    run_direct_product_game,
    run_learning_game,
)
from .measure import (
    BinaryPovm,
    apply_proj_impl,
    controlled_projection,
    proj_impl,
    sampled_api,
    shift_distance,
    threshold_impl,
)
from .oracles import (
    ClassicalFunction,
    OracleCall,
    bbbv_modify,
    classical_gate,
    cp_oracles,
    query_weight,
    run_ops,
)
from .qsim import (
    QuantumState,
    RegisterLayout,
    fidelity,
    gentle_measure,
    hadamard_all,
    partial_trace,
    prepare_subspace_state,
    purify,
    random_mixed,
    random_pure,
    trace_distance,
)
from .runner import three_sigma, trial_rng


@dataclass
class CriterionResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)


def _rng(seed: int, stream: int, i: int = 0) -> np.random.Generator:
    return trial_rng(seed, i, stream=stream)


def check_f2_duality(seed: int) -> CriterionResult:
    rng = _rng(seed, 1)
    worst = 1.0
    for n in range(1, 5):
        for space in all_subspaces(n):
            f = fidelity(hadamard_all(prepare_subspace_state(space), "v"),
                         prepare_subspace_state(space.dual()))
            worst = min(worst, f)
    for _ in range(40):
        n = 8
        space = rand_subspace(n, int(rng.integers(0, n + 1)), rng)
        f = fidelity(hadamard_all(prepare_subspace_state(space), "v"),
                     prepare_subspace_state(space.dual()))
        worst = min(worst, f)
    return CriterionResult("f2-duality", worst >= 1 - 1e-10, {"worst_fidelity": worst})


def check_f2_uniformity(seed: int) -> CriterionResult:
    rng = _rng(seed, 2)
    spaces = all_subspaces(4, 2)
    index = {s: i for i, s in enumerate(spaces)}
    counts = np.zeros(len(spaces))
    draws = 20000
    for _ in range(draws):
        counts[index[rand_subspace(4, 2, rng)]] += 1
    chi2 = float(((counts - draws / len(spaces)) ** 2 / (draws / len(spaces))).sum())
    p = float(stats.chi2.sf(chi2, df=len(spaces) - 1))
    return CriterionResult("f2-uniformity", p > 0.001,
                           {"chi2": chi2, "p_value": p, "cells": len(spaces)})


def check_qsim_roundtrips(seed: int) -> CriterionResult:
    rng = _rng(seed, 3)
    details = {}
    st = random_pure(RegisterLayout.of(("a", 2), ("b", 2)), rng)
    double = hadamard_all(hadamard_all(st, "a"), "a")
    details["h_involution"] = fidelity(double, st)
    ok = details["h_involution"] >= 1 - 1e-10

    mixed = random_mixed(RegisterLayout.of(("a", 2)), rng)
    dist = trace_distance(partial_trace(purify(mixed), ["a"]), mixed)
    details["purify_roundtrip"] = dist
    ok &= dist <= 1e-9

    s0 = QuantumState(RegisterLayout.of(("q", 1)), np.array([1, 0], complex))
    sp = QuantumState(RegisterLayout.of(("q", 1)), np.array([1, 1], complex) / math.sqrt(2))
    details["td_0_plus"] = trace_distance(s0, sp)
    ok &= abs(details["td_0_plus"] - 1 / math.sqrt(2)) <= 1e-12

    psi = QuantumState(RegisterLayout.of(("q", 1)),
                       np.array([math.sqrt(0.99), math.sqrt(0.01)]))
    _, _, d = gentle_measure(psi, np.diag([1.0, 0.0]))
    details["gentle_closed_form"] = d
    ok &= abs(d - 0.1) <= 1e-9
    for eps in (0.5, 0.1, 0.01):
        v = random_pure(RegisterLayout.of(("q", 2)), rng).data
        tgt = np.zeros(4, dtype=complex)
        tgt[0] = 1.0
        vec = math.sqrt(1 - eps) * tgt + math.sqrt(eps) * _orth(v, tgt)
        st2 = QuantumState(RegisterLayout.of(("q", 2)), vec / np.linalg.norm(vec))
        gentle_measure(st2, np.diag([1.0, 0, 0, 0]))  # asserts the bound inline
    return CriterionResult("qsim-roundtrips", bool(ok), details)


def _orth(v: np.ndarray, against: np.ndarray) -> np.ndarray:
    w = v - np.vdot(against, v) * against
    return w / np.linalg.norm(w)


def check_oracle_gates(seed: int) -> CriterionResult:
    rng = _rng(seed, 4)
    A = rand_subspace(4, 2, rng)
    f = ClassicalFunction.random(4, 2, rng)
    g = ClassicalFunction.random(4, 2, rng)
    o1, o2 = cp_oracles(A, f, g)
    dual = A.dual()
    ok = True
    for x in range(4):
        for v in range(16):
            s1, s2 = o1.semantics((x << 4) | v), o2.semantics((x << 4) | v)
            if A.member_bits(v) and v:
                ok &= s1 == f(x) ^ g(x)
            else:
                ok &= s1 is None
            if dual.member_bits(v) and v:
                ok &= s2 == g(x)
            else:
                ok &= s2 is None
    # weight additivity over a partition: (A minus 0) + {0} + non-members
    o1.add_flag_set("all_v", "v", np.ones(16, dtype=bool))
    o1.add_flag_set("zero_v", "v", np.arange(16) == 0)
    o1.add_flag_set("rest_v", "v", ~A.indicator())
    lay = RegisterLayout.of(("x", 2), ("v", 4), ("out", 3))
    st = random_pure(lay, rng)
    o1.reset_transcript()
    run_ops(st, [OracleCall.bind(o1, "out", x="x", v="v")])
    w_all = query_weight(o1.transcript, "all_v")
    w_parts = (query_weight(o1.transcript, "A_nonzero")
               + query_weight(o1.transcript, "zero_v")
               + query_weight(o1.transcript, "rest_v"))
    ok &= abs(w_all - w_parts) <= 1e-9
    return CriterionResult("oracle-gates", bool(ok),
                           {"weight_total": w_all, "weight_parts": w_parts})


def check_bbbv(seed: int) -> CriterionResult:
    """Disturbance bounded by flagged query weight.

    Asserts the universally valid hybrid bound 2*sqrt(T * sum W): a flagged
    component whose output register already holds the paired value
    interferes, contributing up to twice its amplitude per step. The
    tighter factor-1 form is reported as a diagnostic only, since crafted
    interference can exceed it (see the decisions ledger).
    """
    rng = _rng(seed, 5)
    worst_slack = -1.0
    tight_violations = 0
    for trial in range(5):
        f = ClassicalFunction.random(8, 2, rng)
        gate = classical_gate(f, f"Uf{trial}")
        gate.add_flag_set("probe", "x", rng.random(8) < 0.5)
        lay = RegisterLayout.of(("x", 3), ("out", 2), ("w", 2))
        st = random_pure(lay, rng)
        T = int(rng.integers(2, 5))
        ops = []
        for _ in range(T):
            ops.append(OracleCall.bind(gate, "out", x="x"))
        # modify a random set of (query, input) pairs
        flips = {(int(rng.integers(1, T + 1)), int(rng.integers(0, 8)))
                 for _ in range(int(rng.integers(1, 6)))}
        gate.reset_transcript()
        for i, (qi, y) in enumerate(sorted(flips)):
            gate.add_flag_set(f"flip{i}", "x", np.arange(8) == y)
        final = run_ops(st, ops)
        weight = 0.0
        for i, (qi, y) in enumerate(sorted(flips)):
            weight += sum(r.weight for r in gate.transcript
                          if r.flag_set == f"flip{i}" and r.query_index == qi)
        mod = bbbv_modify(gate, flips)
        ops_mod = [OracleCall.bind(mod, "out", x="x") for _ in range(T)]
        final_mod = run_ops(st, ops_mod)
        dist = trace_distance(final, final_mod)
        tight_violations += dist > math.sqrt(T * weight) + 1e-9
        worst_slack = max(worst_slack, dist - 2.0 * math.sqrt(T * weight))
    return CriterionResult("bbbv-bound", worst_slack <= 1e-9,
                           {"worst_slack_2x": worst_slack,
                            "tight_form_violations": tight_violations, "runs": 5})


def check_projimp(seed: int) -> CriterionResult:
    rng = _rng(seed, 6)
    ok = True
    details = {}
    worst_dev = 0.0
    for _ in range(10):
        d = 8
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = g @ g.conj().T
        h /= np.linalg.eigvalsh(h).max() * (1 + rng.random())
        povm = BinaryPovm(h)
        pim = proj_impl(povm)
        st = random_pure(RegisterLayout.of(("q", 3)), rng)
        probs = np.array([np.real(np.vdot(st.data, p @ st.data)) for p in pim.projectors])
        probs = probs.clip(min=0) / probs.clip(min=0).sum()
        shots = 2000
        samples = rng.choice(pim.eigenvalues, size=shots, p=probs)
        exact = povm.expectation(st)
        dev = abs(float(np.mean(samples)) - exact)
        sigma = float(np.std(samples)) / math.sqrt(shots)
        worst_dev = max(worst_dev, dev - (3 * sigma + 1e-3))
        p1, post = apply_proj_impl(pim, st, rng)
        p2, _ = apply_proj_impl(pim, post, rng)
        ok &= p1 == p2
        t_lo = threshold_impl(pim, 0.2)
        t_hi = threshold_impl(pim, 0.8)
        ok &= np.real(np.vdot(st.data, t_lo @ st.data)) >= \
            np.real(np.vdot(st.data, t_hi @ st.data)) - 1e-12
    details["worst_3sigma_slack"] = worst_dev
    return CriterionResult("projimp-equivalence", bool(ok) and worst_dev <= 0.0, details)


def check_splitting(seed: int) -> CriterionResult:
    rng = _rng(seed, 7)
    sk = cp_mod.setup(4, rng)
    f = ClassicalFunction.random(4, 1, rng)
    prog = cp_mod.generate(sk, f, rng)
    swap = anti_piracy_trace(pirate_swap_toy(prog, f, rng), f, 0.6)
    corr = [anti_piracy_trace(pirate_correlated_toy(prog, f, rng), f, g)
            for g in (0.05, 0.5, 1.0)]
    ok = abs(swap) <= 1e-9 and all(abs(c - 1 / 3) <= 1e-9 for c in corr)
    return CriterionResult("splitting-attacks", ok, {"swap": swap, "correlated": corr})


def check_api_contract(seed: int) -> CriterionResult:
    rng = _rng(seed, 8)
    eps, delta = 0.1, 0.05
    n_states = 12
    close = 0
    api_samples, pi_samples = [], []
    d = 16
    coins = []
    for r in range(8):
        mask = rng.random(d) < 0.5
        coins.append((1 / 8, r, np.diag(mask.astype(float))))
    fam = controlled_projection(coins)
    pim = proj_impl(fam.mixture())
    for _ in range(n_states):
        st = random_pure(RegisterLayout.of(("q", 4)), rng)
        p1, post = sampled_api(st, fam, eps, delta, rng)
        p2, _ = sampled_api(post, fam, eps, delta, rng)
        close += abs(p1 - p2) <= eps
        api_samples.append(p1)
        pi_samples.append(apply_proj_impl(pim, st, rng)[0])
    freq = close / n_states
    sd = shift_distance(np.array(api_samples), np.array(pi_samples), eps)
    freq_ok = freq >= 1 - delta - three_sigma(delta, n_states)
    sd_ok = sd <= delta + 3 * math.sqrt(0.25 / n_states)
    return CriterionResult("api-contract", bool(freq_ok and sd_ok),
                           {"repeat_within_eps": freq, "shift_distance": sd})


def check_direct_product(seed: int) -> CriterionResult:
    cfg = GameConfig(lam=4, trials=2000, seed=seed ^ 0x5151)
    rep = run_direct_product_game(cfg, "measure-guess")
    tol = 3 * math.sqrt(rep.derived_expectation * (1 - rep.derived_expectation) / cfg.trials)
    ok = abs(rep.win_rate - rep.derived_expectation) <= tol
    return CriterionResult("direct-product-game", ok,
                           {"win_rate": rep.win_rate, "expected": rep.derived_expectation,
                            "tolerance": tol})


def check_cp_scheme(seed: int) -> CriterionResult:
    rng = _rng(seed, 9)
    lam = 6
    sk = cp_mod.setup(lam, rng)
    f = ClassicalFunction.random(8, 2, rng)
    prog = cp_mod.generate(sk, f, rng)
    half = 1 << (lam // 2)
    ok = True
    details = {}
    # closed-form alternation: first call (1-2^(-lam/2))^3, later calls ^4
    base = 1 - 1 / half
    pr = prog
    probs = []
    for k in range(6):
        x = int(rng.integers(0, 8))
        y, p1, p2, pr = cp_mod.compute_success_path(pr, x)
        ok &= y == f(x)
        probs.append(p1 * p2)
    details["per_call"] = probs
    ok &= abs(probs[0] - base**3) <= 1e-9
    ok &= all(abs(p - base**4) <= 1e-9 for p in probs[1:])
    _, p1, _, _ = cp_mod.compute_success_path(prog, 0)
    details["first_stage"] = p1
    ok &= abs(p1 - base) <= 1e-9
    return CriterionResult("cp-correctness", bool(ok), details)


def check_learning(seed: int) -> CriterionResult:
    rep = run_learning_game(
        GameConfig(domain=8, value_bits=2, gamma=1.0, trials=20, seed=seed ^ 0x33), "table-copy")
    rep2 = run_learning_game(
        GameConfig(domain=8, value_bits=2, gamma=0.25, trials=20, seed=seed ^ 0x44), "dummy")
    ok = rep.win_rate == 1.0 and rep2.win_rate == 0.0
    return CriterionResult("learning-game", ok,
                           {"table_copy": rep.win_rate, "dummy": rep2.win_rate})


def check_case_split(seed: int) -> CriterionResult:
    rng = _rng(seed, 10)
    sk = cp_mod.setup(4, rng)
    f = ClassicalFunction.random(4, 1, rng)
    prog = cp_mod.generate(sk, f, rng)
    split = case_split_probe(pirate_state_split(prog, None, rng), f, 0.4, 0.05, 0.05)
    free = case_split_probe(pirate_oracle_free(prog, f, rng), f, 0.9, 0.05, 0.05)
    ok = split.branch == "extraction" and free.branch == "E1"
    ok &= split.weights["r1_to_o2"] > 0.01 and split.weights["r2_to_o1"] > 0.01
    ok &= abs(free.traces["r1_sub_at_gamma"] - free.traces["r1_full"]) <= 1e-9
    return CriterionResult("case-split-probe", bool(ok),
                           {"split_branch": split.branch, "free_branch": free.branch,
                            "split_weights": split.weights})


def check_copy_detection(seed: int) -> CriterionResult:
    cfg = GameConfig(lam=8, domain=64, value_bits=4, gamma=0.9, trials=200,
                     seed=seed ^ 0x77)
    honest = cd_mod.honest_check_rate(
        GameConfig(lam=8, domain=64, value_bits=4, gamma=0.9, trials=50, seed=seed ^ 0x88))
    dup = cd_mod.run_copy_detection_game(cfg, "duplicate")
    remark = cd_mod.run_copy_detection_game(
        GameConfig(lam=8, domain=64, value_bits=4, gamma=0.9, trials=30, seed=seed ^ 0x99),
        "remark")
    bound = 2.0 ** (-4) + three_sigma(2.0 ** (-4), cfg.trials)
    ok = honest.win_rate == 1.0
    ok &= dup.win_rate <= bound
    ok &= remark.win_rate > 0 and remark.diagnostics["event_E_prime"] == 0
    ok &= remark.diagnostics["event_E"] == remark.wins
    return CriterionResult("copy-detection", bool(ok),
                           {"honest": honest.win_rate, "duplicate": dup.win_rate,
                            "duplicate_bound": bound, "remark_events_E": remark.diagnostics["event_E"]})


def check_money(seed: int) -> CriterionResult:
    honest = money_mod.honest_accept_rate(8, 3, 3, 0.9, 16, trials=60, seed=seed ^ 0xAA)
    clone = money_mod.clone_joint_accept_rate(8, 3, 3, 0.9, 16, trials=200, seed=seed ^ 0xBB)
    bound = 2.0 ** (-4) + three_sigma(2.0 ** (-4), 200)
    ok = honest >= 0.99 and clone <= bound
    return CriterionResult("money", ok,
                           {"honest_accept": honest, "clone_joint": clone, "bound": bound})


ALL_CHECKS = [
    check_f2_duality,
    check_f2_uniformity,
    check_qsim_roundtrips,
    check_oracle_gates,
    check_bbbv,
    check_projimp,
    check_splitting,
    check_api_contract,
    check_direct_product,
    check_cp_scheme,
    check_learning,
    check_case_split,
    check_copy_detection,
    check_money,
]

SUITES = {
    "all": ALL_CHECKS,
    "core": ALL_CHECKS[:6],
    "schemes": ALL_CHECKS[6:],
}


def run_suite(suite: str, seed: int) -> list[CriterionResult]:
    try:
        checks = SUITES[suite]
    except KeyError:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}") from None
    return [chk(seed) for chk in checks]
