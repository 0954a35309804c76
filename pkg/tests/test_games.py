import math

import numpy as np
import pytest
from scipy.linalg import hadamard as dense_hadamard

from qcplab import cp
from qcplab.errors import DimensionError, ProtocolViolationError
from qcplab.f2 import F2Vector
from qcplab.games import (
    GameConfig,
    anti_piracy_trace,
    case_split_probe,
    dummy_program,
    extract_vectors_from_pirate,
    pirate_honest_forward,
    pirate_oracle_free,
    pirate_state_split,
    pirate_swap_toy,
    run_anti_piracy_game,
    run_direct_product_game,
    run_learning_game,
    side_povm,
    side_program,
    table_program,
)
from qcplab.measure import PirateOutput, goodness_povm
from qcplab.oracles import ClassicalFunction
from qcplab.runner import three_sigma, trial_rng


def test_direct_product_give_up_and_cheat():
    cfg = GameConfig(lam=4, trials=50, seed=0)
    rep = run_direct_product_game(cfg, "give-up")
    assert rep.wins == 0 and rep.derived_expectation == 0.0
    with pytest.raises(ProtocolViolationError):
        run_direct_product_game(GameConfig(lam=4, trials=1, seed=0), "cheat-sk")
    with pytest.raises(DimensionError):
        run_direct_product_game(cfg, "nope")


def test_direct_product_measure_guess_closed_form():
    cfg = GameConfig(lam=4, trials=4000, seed=1)
    rep = run_direct_product_game(cfg, "measure-guess")
    expect = (1 - 1 / 4) * (3 / 16)
    assert rep.derived_expectation == expect == 9 / 64
    assert abs(rep.win_rate - expect) <= three_sigma(expect, cfg.trials)
    # lambda = 6 as well
    cfg6 = GameConfig(lam=6, trials=4000, seed=2)
    rep6 = run_direct_product_game(cfg6, "measure-guess")
    expect6 = (1 - 1 / 8) * (7 / 64)
    assert abs(rep6.win_rate - expect6) <= three_sigma(expect6, cfg6.trials)


def test_direct_product_both_token_matches_exact_oracle():
    """Oracle: enumerate the measured token vector and the Hadamard-basis
    remeasurement distribution with a dense transform."""
    lam = 4
    rng = trial_rng(3, 0)
    sk = cp.setup(lam, rng)
    A = sk.subspace
    H = dense_hadamard(1 << lam) / math.sqrt(1 << lam)
    in_dual_nz = sk.dual.indicator().copy()
    in_dual_nz[0] = False
    win = 0.0
    for u in A.enumerate_bits():
        basis = np.zeros(1 << lam)
        basis[u] = 1.0
        dist = np.abs(H @ basis) ** 2
        if u != 0:
            win += (1 / A.size) * float(dist[in_dual_nz].sum())
    # the win probability is subspace-independent; compare Monte Carlo
    cfg = GameConfig(lam=lam, trials=4000, seed=4)
    rep = run_direct_product_game(cfg, "both-token")
    assert abs(rep.win_rate - win) <= three_sigma(win, cfg.trials)


def test_direct_product_scan_guess_queries_and_rate():
    """The scanning adversary always finds a primal member through the
    instrumented oracle, so only the dual guess limits the win rate."""
    cfg = GameConfig(lam=4, trials=2500, seed=21)
    rep = run_direct_product_game(cfg, "scan-guess")
    expect = 3 / 16
    assert rep.derived_expectation == expect
    assert abs(rep.win_rate - expect) <= three_sigma(expect, cfg.trials)
    # transcripts show real queries against the primal membership oracle
    assert rep.transcripts
    assert all(row[1] == "U_A" for row in rep.transcripts)


def test_learning_game_examples():
    # full query budget learns everything at gamma = 1
    rep = run_learning_game(
        GameConfig(domain=8, value_bits=2, gamma=1.0, trials=30, seed=5), "table-copy")
    assert rep.win_rate == 1.0
    assert rep.diagnostics["mean_queries"] == 8.0
    # dummy never wins for gamma > 0
    rep = run_learning_game(
        GameConfig(domain=8, value_bits=2, gamma=0.05, trials=30, seed=6), "dummy")
    assert rep.win_rate == 0.0


def test_learning_zero_query_vs_enumeration_oracle():
    """Oracle: enumerate all 4^8 guess tables against a fixed target."""
    n, m, gamma = 8, 2, 0.5
    matches_needed = math.ceil(gamma * n - 1e-9)
    total = 0
    count = 0
    # matches against any fixed f are distribution-invariant; count tables
    # by their agreement pattern with f = 0
    for k in range(n + 1):
        ways = math.comb(n, k) * (3 ** (n - k))
        total += ways
        if k >= matches_needed:
            count += ways
    oracle_rate = count / total
    assert total == 4**n
    cfg = GameConfig(domain=n, value_bits=m, gamma=gamma, trials=2500, seed=7)
    rep = run_learning_game(cfg, "zero-query-guess")
    assert abs(rep.derived_expectation - oracle_rate) <= 1e-12
    assert abs(rep.win_rate - oracle_rate) <= three_sigma(oracle_rate, cfg.trials)


def test_anti_piracy_exact_traces_and_monte_carlo():
    cfg = GameConfig(lam=4, domain=4, value_bits=1, gamma=0.75, trials=300, seed=8)
    rep = run_anti_piracy_game(cfg, "correlated-toy")
    assert abs(rep.diagnostics["mean_exact_trace"] - 1 / 3) <= 1e-9
    assert abs(rep.win_rate - 1 / 3) <= three_sigma(1 / 3, cfg.trials)
    swap = run_anti_piracy_game(
        GameConfig(lam=4, domain=4, value_bits=1, gamma=0.75, trials=40, seed=9), "swap-toy")
    assert swap.win_rate == 0.0 and swap.diagnostics["mean_exact_trace"] <= 1e-12
    honest = run_anti_piracy_game(
        GameConfig(lam=4, domain=4, value_bits=1, gamma=0.6, trials=30, seed=10),
        "honest-forward")
    assert honest.win_rate == 0.0


def test_pirate_output_shapes():
    rng = trial_rng(11, 0)
    sk = cp.setup(4, rng)
    f = ClassicalFunction.random(4, 1, rng)
    prog = cp.generate(sk, f, rng)
    hf = pirate_honest_forward(prog, None, rng)
    assert hf.state.layout.names() == ("r1_v", "r2_p")
    split = pirate_state_split(prog, None, rng)
    assert split.state.layout.names() == ("coin", "r1_v", "r2_v")
    # the split halves are each half-weight copies of the program state
    s1 = side_program(split, 1).state
    assert abs(np.real(np.trace(prog.state.density() @ s1.data)) - 0.5) <= 0.3


def exact_split_extraction_rate(sk, prog):
    """Exact success chain for the split pirate halted at the first queries.

    Definitional evolution with dense arrays: write the first oracle's
    answer, Hadamard the first side, read the query register distribution,
    collapse, then read the second side's first-query distribution.
    """
    lam = sk.lam
    m = prog.value_bits
    o1 = prog.oracles["o1"]
    dim_v = 1 << lam
    out_dim = 1 << (1 + m)
    H = dense_hadamard(dim_v) / math.sqrt(dim_v)
    in_a_nz = sk.subspace.indicator().copy()
    in_a_nz[0] = False
    in_d_nz = sk.dual.indicator().copy()
    in_d_nz[0] = False
    vecA = np.zeros(dim_v, complex)
    for v in sk.subspace.enumerate_bits():
        vecA[v] = 1.0
    vecA /= np.linalg.norm(vecA)

    domain = prog.domain
    total = 0.0
    for x1 in range(domain):
        # psi[c, v1, v2, o1out]
        psi = np.zeros((2, dim_v, dim_v, out_dim), complex)
        for v1 in range(dim_v):
            enc = int(o1.enc_table[(x1 << lam) | v1])
            psi[0, v1, 0, enc] = vecA[v1] / math.sqrt(2)
        enc0 = int(o1.enc_table[(x1 << lam) | 0])
        for v2 in range(dim_v):
            psi[1, 0, v2, enc0] += vecA[v2] / math.sqrt(2)
        psi = np.tensordot(H, psi, axes=(1, 1)).transpose(1, 0, 2, 3)  # H on v1
        q1 = np.einsum("cvwo->v", np.abs(psi) ** 2)
        for v in range(dim_v):
            if not in_d_nz[v] or q1[v] <= 1e-15:
                continue
            slice_v = psi[:, v, :, :]
            q2 = np.einsum("cwo->w", np.abs(slice_v) ** 2) / q1[v]
            total += (1 / domain) * q1[v] * float(q2[in_a_nz].sum())
    return total


def test_extraction_matches_exact_chain_oracle():
    rng = trial_rng(12, 0)
    sk = cp.setup(4, rng)
    f = ClassicalFunction.random(4, 1, rng)
    prog = cp.generate(sk, f, rng)
    split = pirate_state_split(prog, None, rng)
    want = exact_split_extraction_rate(sk, prog)
    runs = 600
    wins = 0
    for i in range(runs):
        r = trial_rng(13, i)
        res = extract_vectors_from_pirate(
            split, f, sk.subspace, 0.4, 0.2, 0.2, r, halt_override=(1, 1))
        if res.ok:
            wins += 1
        if res.u is not None:
            assert isinstance(res.u, F2Vector) and res.u.n == 4
    assert abs(wins / runs - want) <= three_sigma(max(want, 1e-3), runs)
    assert want > 0.01  # the split pirate does feed both oracles


def test_extraction_structured_failures():
    rng = trial_rng(14, 0)
    sk = cp.setup(4, rng)
    f = ClassicalFunction.random(4, 1, rng)
    prog = cp.generate(sk, f, rng)
    # a pirate whose circuits never touch the oracles
    free = pirate_oracle_free(prog, f, rng)
    res = extract_vectors_from_pirate(free, f, sk.subspace, 0.4, 0.2, 0.2, rng)
    assert not res.ok and res.failure == "no-o2-queries-on-r1"
    # toy pirates carry no oracle slots at all
    toy = pirate_swap_toy(prog, f, rng)
    res = extract_vectors_from_pirate(toy, f, sk.subspace, 0.4, 0.2, 0.2, rng)
    assert not res.ok and res.failure == "no-oracle-slots"


def test_full_extraction_returns_wire_values():
    rng = trial_rng(15, 0)
    sk = cp.setup(4, rng)
    f = ClassicalFunction.random(4, 1, rng)
    prog = cp.generate(sk, f, rng)
    split = pirate_state_split(prog, None, rng)
    res = extract_vectors_from_pirate(split, f, sk.subspace, 0.4, 0.3, 0.3, rng)
    # whatever the outcome, the returned vectors are measured query values
    assert res.u is None or res.u.n == sk.lam
    assert res.v is None or res.v.n == sk.lam


def test_case_split_branches():
    rng = trial_rng(16, 0)
    sk = cp.setup(4, rng)
    f = ClassicalFunction.random(4, 1, rng)
    prog = cp.generate(sk, f, rng)

    split = case_split_probe(pirate_state_split(prog, None, rng), f, 0.4, 0.05, 0.05)
    assert split.branch == "extraction"
    assert split.weights["r1_to_o2"] > 0.01 and split.weights["r2_to_o1"] > 0.01
    assert split.traces["r1_sub"] <= 1e-9 and split.traces["r2_sub"] <= 1e-9

    free = case_split_probe(pirate_oracle_free(prog, f, rng), f, 0.9, 0.05, 0.05)
    assert free.branch == "E1"
    # no oracle use: substitution cannot change the measured trace
    assert abs(free.traces["r1_sub_at_gamma"] - free.traces["r1_full"]) <= 1e-9
    assert free.weights["r1_to_o2"] == 0.0

    # double-dummy pirate: all traces vanish
    d1 = dummy_program(1, prefix="r1_")
    d2 = dummy_program(1, prefix="r2_")
    dud = PirateOutput(d1.state.tensor(d2.state), "r1_p", "r2_p",
                       d1.evaluator, d2.evaluator, dict(prog.oracles))
    probe = case_split_probe(dud, f, 0.4, 0.05, 0.05)
    assert probe.branch == "extraction"
    assert all(v <= 1e-9 for v in probe.traces.values())


def test_case_split_bbbv_consistency():
    """Mixture-POVM trace gap under oracle substitution is bounded by the
    flagged-weight budget reported by the probe."""
    rng = trial_rng(17, 0)
    sk = cp.setup(4, rng)
    f = ClassicalFunction.random(4, 1, rng)
    prog = cp.generate(sk, f, rng)
    split = pirate_state_split(prog, None, rng)
    probe = case_split_probe(split, f, 0.4, 0.05, 0.05)
    from qcplab.oracles import bot_oracle

    o2 = prog.oracles["o2"]
    bot = bot_oracle(o2.fields, o2.value_bits)
    p_full = side_povm(split, 1, f)
    p_sub = side_povm(split, 1, f, oracles={"o2": bot})
    sigma1 = side_program(split, 1).state
    gap = abs(p_full.expectation(sigma1) - p_sub.expectation(sigma1))
    assert gap <= math.sqrt(probe.weights["r1_to_o2"]) + 1e-9


def test_anti_piracy_win_equals_expected_joint_trace():
    """Monte Carlo win frequency tracks E_f[Tr[(TI x TI) sigma]] per pirate."""
    cfg = GameConfig(lam=4, domain=4, value_bits=1, gamma=0.3, trials=250, seed=18)
    rep = run_anti_piracy_game(cfg, "state-split")
    exact = rep.diagnostics["mean_exact_trace"]
    assert exact is not None
    assert abs(rep.win_rate - exact) <= three_sigma(max(exact, 1e-3), cfg.trials)
    jt = rep.diagnostics["joint_test"]
    assert set(jt) == {"gamma", "trace", "shots", "ci95"}
    assert jt["ci95"][0] <= rep.win_rate <= jt["ci95"][1]


def test_anti_piracy_sampled_path_within_sandwich(monkeypatch):
    """Forcing the sampled path at a size where the exact joint threshold is
    still computable, the Monte Carlo rate must sit inside the approximate-
    threshold sandwich [Tr_(g+e) - 2d, Tr_(g-e) + 2d]."""
    import qcplab.games as games_mod

    monkeypatch.setattr(games_mod, "EXACT_JOINT_CAP", 16)
    gamma, eps, delta = 0.5, 0.3, 0.3
    cfg = GameConfig(lam=4, domain=4, value_bits=1, gamma=gamma, trials=12, seed=19,
                     eps=eps, delta=delta)
    rep = run_anti_piracy_game(cfg, "state-split")
    assert rep.diagnostics["measurement"] == "sampled-ati"
    # exact envelope, averaged over the same per-trial instances
    lows, highs = [], []
    for i in range(cfg.trials):
        rng = trial_rng(cfg.seed, i)
        sk = cp.setup(cfg.lam, rng)
        f = ClassicalFunction.random(cfg.domain, cfg.value_bits, rng)
        prog = cp.generate(sk, f, rng)
        split = pirate_state_split(prog, None, rng)
        lows.append(anti_piracy_trace(split, f, gamma + eps))
        highs.append(anti_piracy_trace(split, f, gamma - eps))
    low = float(np.mean(lows)) - 2 * delta
    high = float(np.mean(highs)) + 2 * delta
    slack = three_sigma(0.5, cfg.trials)
    assert low - slack <= rep.win_rate <= high + slack


def test_table_and_dummy_program_builders():
    rng = trial_rng(19, 0)
    f = ClassicalFunction.random(4, 2, rng)
    tp = table_program(f.table, 2)
    povm = goodness_povm(tp, f)
    assert abs(povm.expectation(tp.state) - 1.0) <= 1e-12
    dp = dummy_program(2)
    povm_d = goodness_povm(dp, f)
    assert abs(povm_d.expectation(dp.state)) <= 1e-12
