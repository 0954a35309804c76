"""Copy detection from watermarking plus quantum money.

Generate mints a banknote, reads its serial number, and marks the circuit
with that serial; Check re-verifies the note and compares its serial with
the publicly extracted mark. Both building blocks are toy instantiations:

* Watermark: circuits are explicit tables; marking overwrites a hidden set
  of four cells with the message, extraction reads them back by strict
  majority (>= 3 agreeing). The extraction key (the cell positions) is
  public, so unremovability is deliberately weak; the harness's re-marking
  pirate exploits exactly that.
* Money: a banknote is a classical serial plus the subspace state for a
  hidden half-dimensional subspace registered with the issuer. Verification
  projects onto the subspace's support, Hadamards, projects onto the dual's
  support, and Hadamards back; the accepting branch is exactly the rank-one
  projector onto the subspace state, so a classically copied note passes
  with probability 2^(-lambda/2).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, ResourceLimitError
from .f2 import F2Subspace, rand_subspace
from .games import GameConfig, GameReport, _finish
from .qsim import (
    QuantumState,
    RegisterLayout,
    hadamard_all,
    measure_register,
    prepare_subspace_state,
)
from .measure import measure_binary_mask
from .runner import run_trials, trial_rng

HIDDEN_CELLS = 4
MAJORITY = 3  # of the four hidden cells


# ---------------------------------------------------------------------------
# toy watermarking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WatermarkKeys:
    """Toy scheme: both keys are the hidden cell positions (extraction is public)."""

    xk: tuple[int, ...]
    mk: tuple[int, ...]
    domain: int
    message_bits: int


def wm_setup(domain: int, message_bits: int, rng: np.random.Generator,
             hidden: int = HIDDEN_CELLS) -> WatermarkKeys:
    if domain < 2 * hidden:
        raise DimensionError("domain too small to hide the mark cells")
    cells = tuple(sorted(int(c) for c in rng.choice(domain, size=hidden, replace=False)))
    return WatermarkKeys(xk=cells, mk=cells, domain=domain, message_bits=message_bits)


def wm_sample_function(keys: WatermarkKeys, rng: np.random.Generator) -> tuple[int, ...]:
    return tuple(int(v) for v in rng.integers(0, 1 << keys.message_bits, size=keys.domain))


def wm_mark(keys: WatermarkKeys, table: Sequence[int], message: int) -> tuple[int, ...]:
    """Overwrite the hidden cells with the message (repetition encoding)."""
    if not 0 <= message < (1 << keys.message_bits):
        raise DimensionError("message outside the watermark message space")
    out = list(int(t) for t in table)
    for c in keys.mk:
        out[c] = message
    return tuple(out)


def wm_extract(xk: tuple[int, ...], aux, table: Sequence[int]) -> int | None:
    """Strict-majority read of the hidden cells; None when no message dominates."""
    votes: dict[int, int] = {}
    for c in xk:
        votes[int(table[c])] = votes.get(int(table[c]), 0) + 1
    best, count = max(votes.items(), key=lambda kv: kv[1])
    return best if count >= MAJORITY else None


def wm_meaningfulness_tolerance(message_bits: int) -> float:
    """Exact collision probability of a majority among uniform cells."""
    m = 1 << message_bits
    return (4 * m - 3) / m**3


def wm_functionality_tolerance(keys: WatermarkKeys) -> float:
    return HIDDEN_CELLS / keys.domain


def table_agreement(a: Sequence[int], b: Sequence[int]) -> float:
    return sum(1 for x, y in zip(a, b) if x == y) / len(a)


# ---------------------------------------------------------------------------
# toy quantum money mini-scheme
# ---------------------------------------------------------------------------


@dataclass
class Banknote:
    serial: int
    state: QuantumState  # over register "note"


class SubspaceMoney:
    """Mini-scheme with explicit serials and a public verifier registry."""

    def __init__(self, lam: int, serial_bits: int):
        if lam % 2:
            raise DimensionError("lambda must be even")
        self.lam = lam
        self.serial_bits = serial_bits
        self.registry: dict[int, tuple[F2Subspace, F2Subspace]] = {}

    def gen(self, rng: np.random.Generator) -> Banknote:
        if len(self.registry) >= (1 << self.serial_bits):
            raise ResourceLimitError("serial space exhausted")
        while True:
            serial = int(rng.integers(0, 1 << self.serial_bits))
            if serial not in self.registry:
                break
        space = rand_subspace(self.lam, self.lam // 2, rng)
        self.registry[serial] = (space, space.dual())
        return Banknote(serial, prepare_subspace_state(space, "note"))

    def ver(self, note: Banknote, rng: np.random.Generator) -> tuple[int | None, Banknote]:
        """Projective verification; returns (serial or None, collapsed note).

        Accept is the two-step subspace test whose accepting operator is
        the rank-one projector onto the registered subspace state.
        """
        entry = self.registry.get(note.serial)
        if entry is None:
            return None, note
        space, dual = entry
        state = note.state
        bit, state, _ = measure_binary_mask(state, space.indicator(), rng)
        if bit != 0:
            return None, replace(note, state=state)
        state = hadamard_all(state, "note")
        bit, state, _ = measure_binary_mask(state, dual.indicator(), rng)
        state = hadamard_all(state, "note")
        if bit != 0:
            return None, replace(note, state=state)
        return note.serial, replace(note, state=state)

    def classical_copy(self, note: Banknote, rng: np.random.Generator) -> tuple[Banknote, Banknote]:
        """Measure the note and duplicate the outcome (the naive counterfeit)."""
        outcome, _, _ = measure_register(note.state, "note", rng)
        layout = RegisterLayout.of(("note", self.lam))
        return (
            Banknote(note.serial, QuantumState.basis(layout, outcome)),
            Banknote(note.serial, QuantumState.basis(layout, outcome)),
        )


# ---------------------------------------------------------------------------
# the copy-detection scheme
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CdPublicKey:
    xk: tuple[int, ...]
    money: SubspaceMoney
    domain: int
    value_bits: int


@dataclass(frozen=True)
class CdSecretKey:
    wm: WatermarkKeys
    money: SubspaceMoney


@dataclass
class CdProgram:
    """A marked classical table plus its banknote; evaluation is table lookup."""

    table: tuple[int, ...]
    note: Banknote
    aux: object = None

    def evaluate(self, x: int) -> int:
        return self.table[x]


def cd_setup(
    lam: int,
    rng: np.random.Generator,
    *,
    domain: int = 64,
    value_bits: int = 4,
) -> tuple[CdPublicKey, CdSecretKey]:
    wm = wm_setup(domain, value_bits, rng)
    money = SubspaceMoney(lam, serial_bits=value_bits)  # serial space = message space
    return CdPublicKey(wm.xk, money, domain, value_bits), CdSecretKey(wm, money)


def cd_generate(sk: CdSecretKey, table: Sequence[int], rng: np.random.Generator) -> CdProgram:
    note = sk.money.gen(rng)
    marked = wm_mark(sk.wm, table, note.serial)
    return CdProgram(marked, note)


def cd_check(
    pk: CdPublicKey, aux, program: CdProgram, rng: np.random.Generator
) -> tuple[int, CdProgram]:
    """0 iff the note verifies and its serial equals the extracted mark."""
    serial, collapsed_note = pk.money.ver(program.note, rng)
    collapsed = replace(program, note=collapsed_note)
    if serial is None:
        return 1, collapsed
    if serial != wm_extract(pk.xk, aux, program.table):
        return 1, collapsed
    return 0, collapsed


# ---------------------------------------------------------------------------
# the copy-detection game
# ---------------------------------------------------------------------------


@dataclass
class CdContext:
    """What a pirate receives: its programs, the public key, and a money mint.

    The mint models legitimate acquisition of fresh banknotes (money
    security only forbids duplicating a serial, not owning other notes).
    """

    programs: list[CdProgram]
    pk: CdPublicKey
    mint: Callable[[], Banknote]
    rng: np.random.Generator


def pirate_duplicate(ctx: CdContext) -> list[CdProgram]:
    """Classically copy the first program: same table, measured-note copies."""
    first = ctx.programs[0]
    n1, n2 = ctx.pk.money.classical_copy(first.note, ctx.rng)
    rest = ctx.programs[1:]
    return [replace(first, note=n1), replace(first, note=n2)] + rest


def pirate_remark(ctx: CdContext) -> list[CdProgram]:
    """Strip and re-mark a copy using the public extraction key plus a fresh note."""
    first = ctx.programs[0]
    fresh = ctx.mint()
    table = list(first.table)
    for c in ctx.pk.xk:
        table[c] = fresh.serial
    return list(ctx.programs) + [CdProgram(tuple(table), fresh)]


def pirate_honest_dummy(ctx: CdContext) -> list[CdProgram]:
    """Return the real programs plus a junk program with a valid fresh note."""
    fresh = ctx.mint()
    junk = [0] * ctx.pk.domain
    for c in ctx.pk.xk:
        junk[c] = fresh.serial
    return list(ctx.programs) + [CdProgram(tuple(junk), fresh)]


CD_PIRATES = {
    "duplicate": pirate_duplicate,
    "remark": pirate_remark,
    "honest-dummy": pirate_honest_dummy,
}


def run_copy_detection_game(
    cfg: GameConfig,
    pirate: str | None = None,
    q: int = 1,
    threads: int | None = None,
) -> GameReport:
    """The q-collusion copy-detection game with win-event diagnostics.

    The game outputs 0 (pirate wins) iff all q+1 returned programs pass
    Check and every collapsed table computes the sampled function on at
    least a gamma fraction of inputs. Winning trials are classified into
    the two proof events: E-prime when every passing serial was issued
    with the pirate's programs (a money duplication), E otherwise (a mark
    forgery on a fresh serial).
    """
    name = pirate or cfg.adversary
    try:
        strategy = CD_PIRATES[name]
    except KeyError:
        raise DimensionError(f"unknown copy-detection pirate {name!r}") from None
    if q < 1:
        raise DimensionError("q must be >= 1")

    def one(i: int):
        rng = trial_rng(cfg.seed, i)
        pk, sk = cd_setup(cfg.lam, rng, domain=cfg.domain, value_bits=cfg.value_bits)
        f_table = wm_sample_function(sk.wm, rng)
        issued = [cd_generate(sk, f_table, rng) for _ in range(q)]
        issued_serials = {p.note.serial for p in issued}
        ctx = CdContext(issued, pk, mint=lambda: sk.money.gen(rng), rng=rng)
        outputs = strategy(ctx)
        if len(outputs) != q + 1:
            raise DimensionError(f"pirate returned {len(outputs)} programs, wanted {q + 1}")
        serials = []
        all_pass = True
        collapsed: list[CdProgram] = []
        for prog in outputs:
            bit, coll = cd_check(pk, None, prog, rng)
            collapsed.append(coll)
            serials.append(coll.note.serial if bit == 0 else None)
            all_pass &= bit == 0
        good = all(
            table_agreement(p.table, f_table) >= cfg.gamma - 1e-9 for p in collapsed
        )
        win = all_pass and good
        event = None
        if win:
            event = "E'" if all(s in issued_serials for s in serials) else "E"
        return win, event, all_pass

    outcomes = run_trials(cfg.trials, one, threads)
    flags = [w for w, _, _ in outcomes]
    events = [e for _, e, _ in outcomes if e]
    diag = {
        "q": q,
        "gamma": cfg.gamma,
        "checks_passed_rate": float(np.mean([c for _, _, c in outcomes])),
        "event_E": sum(1 for e in events if e == "E"),
        "event_E_prime": sum(1 for e in events if e == "E'"),
    }
    return _finish("copy-detection", name, flags, cfg.trials, None, diag)


def honest_check_rate(cfg: GameConfig, threads: int | None = None) -> GameReport:
    """Check correctness on honestly generated programs (no pirate)."""

    def one(i: int):
        rng = trial_rng(cfg.seed, i)
        pk, sk = cd_setup(cfg.lam, rng, domain=cfg.domain, value_bits=cfg.value_bits)
        f_table = wm_sample_function(sk.wm, rng)
        prog = cd_generate(sk, f_table, rng)
        bit, coll = cd_check(pk, None, prog, rng)
        bit2, _ = cd_check(pk, None, coll, rng)  # projectivity: re-check must agree
        assert bit2 == bit, "check is not projective"
        return bit == 0, None, bit == 0

    outcomes = run_trials(cfg.trials, one, threads)
    flags = [w for w, _, _ in outcomes]
    return _finish("copy-detection", "honest", flags, cfg.trials, 1.0,
                   {"projective_recheck": True})
