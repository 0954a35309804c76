"""Public-key quantum money from copy detection plus a toy encryption scheme.

A banknote is a copy-detection program for the decryption table.
Verification runs the copy-detection check and then tests that the
(collapsed) circuit still decrypts encryptions of random messages; the toy
encryption tables are public at this scale, so only the construction's
correctness and the reduction wiring are meaningful, never its secrecy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cd import (
    CdContext,
    CdProgram,
    CdPublicKey,
    CdSecretKey,
    cd_check,
    cd_generate,
    cd_setup,
    pirate_duplicate,
)
from .errors import DimensionError
from .runner import run_trials, trial_rng

EXACT_CHALLENGE_CAP = 4096
DEFAULT_CHALLENGES = 16


@dataclass(frozen=True)
class ToyPke:
    """Table public-key encryption: Enc a random bijection (m, r) -> ct."""

    msg_bits: int
    rand_bits: int
    enc_table: tuple[int, ...]   # index (m << rand_bits) | r
    dec_table: tuple[int, ...]   # index ct -> m

    @property
    def messages(self) -> int:
        return 1 << self.msg_bits

    @property
    def ciphertexts(self) -> int:
        return 1 << (self.msg_bits + self.rand_bits)

    def enc(self, m: int, rng: np.random.Generator) -> int:
        if not 0 <= m < self.messages:
            raise DimensionError("message outside the space")
        r = int(rng.integers(0, 1 << self.rand_bits))
        return self.enc_table[(m << self.rand_bits) | r]

    def dec(self, ct: int) -> int:
        return self.dec_table[ct]


def pke_keygen(msg_bits: int, rand_bits: int, rng: np.random.Generator) -> ToyPke:
    n = 1 << (msg_bits + rand_bits)
    perm = rng.permutation(n)
    enc_table = tuple(int(c) for c in perm)
    dec_table = [0] * n
    for mr, ct in enumerate(enc_table):
        dec_table[ct] = mr >> rand_bits
    return ToyPke(msg_bits, rand_bits, enc_table, tuple(dec_table))


@dataclass(frozen=True)
class MoneyPublicKey:
    pke: ToyPke
    cd_pk: CdPublicKey


@dataclass(frozen=True)
class MoneySecretKey:
    pke: ToyPke
    cd_sk: CdSecretKey


@dataclass
class MoneyBanknote:
    program: CdProgram
    aux: ToyPke  # the encryption tables are the program's public auxiliary data


def money_keygen(
    lam: int,
    rng: np.random.Generator,
    *,
    msg_bits: int = 3,
    rand_bits: int = 3,
) -> tuple[MoneyPublicKey, MoneySecretKey]:
    pke = pke_keygen(msg_bits, rand_bits, rng)
    cd_pk, cd_sk = cd_setup(lam, rng, domain=pke.ciphertexts, value_bits=msg_bits)
    return MoneyPublicKey(pke, cd_pk), MoneySecretKey(pke, cd_sk)


def money_gennote(sk: MoneySecretKey, rng: np.random.Generator) -> MoneyBanknote:
    program = cd_generate(sk.cd_sk, sk.pke.dec_table, rng)
    return MoneyBanknote(program, sk.pke)


def decryption_goodness(pke: ToyPke, table) -> float:
    """Exact fraction of (message, randomness) pairs the table decrypts correctly."""
    hits = 0
    for m in range(pke.messages):
        for r in range(1 << pke.rand_bits):
            ct = pke.enc_table[(m << pke.rand_bits) | r]
            hits += table[ct] == m
    return hits / pke.ciphertexts


def money_verify(
    pk: MoneyPublicKey,
    note: MoneyBanknote,
    gamma: float,
    k: int,
    rng: np.random.Generator,
) -> int:
    """0 to accept: the check passes and the circuit is gamma-good at decryption.

    The goodness test is exact (full table fraction) when the challenge
    space fits the cap, otherwise k sampled encryption challenges.
    """
    if k < 1:
        raise DimensionError("need at least one test ciphertext")
    bit, collapsed = cd_check(pk.cd_pk, None, note.program, rng)
    if bit != 0:
        return 1
    if pk.pke.ciphertexts <= EXACT_CHALLENGE_CAP:
        frac = decryption_goodness(pk.pke, collapsed.table)
    else:
        hits = 0
        for _ in range(k):
            m = int(rng.integers(0, pk.pke.messages))
            ct = pk.pke.enc(m, rng)
            hits += collapsed.table[ct] == m
        frac = hits / k
    return 0 if frac >= gamma - 1e-9 else 1


def clone_attack(
    pk: MoneyPublicKey, note: MoneyBanknote, rng: np.random.Generator
) -> tuple[MoneyBanknote, MoneyBanknote]:
    """The naive counterfeiter, expressed through the copy-detection pirate.

    Runs the duplicate pirate of the copy-detection game on the note's
    program so that every money attack corresponds verbatim to a
    copy-detection game trace.
    """
    ctx = CdContext([note.program], pk.cd_pk, mint=None, rng=rng)
    p1, p2 = pirate_duplicate(ctx)
    return MoneyBanknote(p1, note.aux), MoneyBanknote(p2, note.aux)


def honest_accept_rate(
    lam: int, msg_bits: int, rand_bits: int, gamma: float, k: int,
    trials: int, seed: int, threads: int | None = None,
) -> float:
    def one(i: int) -> bool:
        rng = trial_rng(seed, i)
        pk, sk = money_keygen(lam, rng, msg_bits=msg_bits, rand_bits=rand_bits)
        note = money_gennote(sk, rng)
        return money_verify(pk, note, gamma, k, rng) == 0

    flags = run_trials(trials, one, threads)
    return sum(flags) / trials


def clone_joint_accept_rate(
    lam: int, msg_bits: int, rand_bits: int, gamma: float, k: int,
    trials: int, seed: int, threads: int | None = None,
) -> float:
    def one(i: int) -> bool:
        rng = trial_rng(seed, i)
        pk, sk = money_keygen(lam, rng, msg_bits=msg_bits, rand_bits=rand_bits)
        note = money_gennote(sk, rng)
        n1, n2 = clone_attack(pk, note, rng)
        return money_verify(pk, n1, gamma, k, rng) == 0 and \
            money_verify(pk, n2, gamma, k, rng) == 0

    flags = run_trials(trials, one, threads)
    return sum(flags) / trials
