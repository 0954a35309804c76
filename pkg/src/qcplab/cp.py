"""The subspace-state copy-protection scheme.

Setup picks a uniformly random half-dimensional subspace A of GF(2)^lambda.
Generate hands out the subspace state |A> plus two oracles: the first
answers f(x) (+) g(x) on nonzero members of A, the second answers g(x) on
nonzero members of the dual, both answering bottom elsewhere (g a fresh
uniformly random function). Compute queries the first oracle, measures the
output, moves the register to the dual basis, queries the second oracle,
and XORs the two data words; the membership checks live inside the
oracles' validity predicate. A final Hadamard restores the register to the
A-side basis so the program can be reused.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError
from .f2 import F2Subspace, F2Vector, rand_subspace
from .measure import Evaluator
from .oracles import (
    ClassicalFunction,
    HadamardAllOp,
    InstrumentedOracle,
    LoadConstant,
    OracleCall,
    cp_oracles,
    membership_oracle,
    run_ops,
)
from .qsim import (
    PURE_QUBIT_CAP,
    QuantumState,
    RegisterLayout,
    collapse_register,
    drop_register,
    hadamard_all,
    measure_register,
    prepare_subspace_state,
    register_distribution,
)


@dataclass(frozen=True)
class CpSecretKey:
    """The vendor's secret: the hidden subspace (dual cached alongside)."""

    subspace: F2Subspace
    dual: F2Subspace

    @property
    def lam(self) -> int:
        return self.subspace.n


@dataclass(frozen=True)
class CpProgram:
    """A copy-protected program: the subspace state plus oracle handles."""

    state: QuantumState                       # over register "v" (lam qubits)
    evaluator: Evaluator
    oracles: dict[str, InstrumentedOracle]    # slots "o1", "o2"
    membership: tuple[InstrumentedOracle, InstrumentedOracle]  # U_A, U_Adual
    lam: int
    domain: int
    value_bits: int


def setup(lam: int, rng: np.random.Generator) -> CpSecretKey:
    """Pick a uniformly random lam/2-dimensional subspace of GF(2)^lam."""
    if lam % 2 != 0:
        raise DimensionError(f"security parameter must be even, got {lam}")
    if lam > PURE_QUBIT_CAP:
        raise DimensionError(f"lambda {lam} exceeds the simulable cap {PURE_QUBIT_CAP}")
    A = rand_subspace(lam, lam // 2, rng)
    return CpSecretKey(A, A.dual())


def make_cp_evaluator(
    lam: int, input_bits: int, value_bits: int, prefix: str = ""
) -> Evaluator:
    """Coherent evaluation circuit family for the scheme's programs.

    Layout: the program register plus one output register per oracle
    query. The accepted outputs for answer fx are the pairs with both
    validity bits set whose data words XOR to fx. A register prefix keeps
    names disjoint when two programs share a joint state.
    """
    m = value_bits
    v, out1, out2 = f"{prefix}v", f"{prefix}out1", f"{prefix}out2"
    layout = RegisterLayout.of((v, lam), (out1, 1 + m), (out2, 1 + m))
    width = 1 + m

    def build_ops(x: int, oracles):
        return [
            OracleCall.bind(oracles["o1"], out1, x=int(x), v=v),
            HadamardAllOp(v),
            OracleCall.bind(oracles["o2"], out2, x=int(x), v=v),
        ]

    def accept_value(x: int, fx: int) -> np.ndarray:
        mask = np.zeros(1 << (2 * width), dtype=bool)
        for e1 in range(1 << width):
            for e2 in range(1 << width):
                if (e1 >> m) & (e2 >> m) and ((e1 ^ e2) & ((1 << m) - 1)) == fx:
                    mask[(e1 << width) | e2] = True
        return mask

    return Evaluator(
        layout=layout,
        program_regs=(v,),
        output_regs=(out1, out2),
        build_ops=build_ops,
        accept_value=accept_value,
        oracle_slots=("o1", "o2"),
    )


def generate(sk: CpSecretKey, f: ClassicalFunction, rng: np.random.Generator) -> CpProgram:
    """Prepare |A> and the instrumented oracle pair with a fresh random g."""
    g = ClassicalFunction.random(f.domain, f.value_bits, rng)
    o1, o2 = cp_oracles(sk.subspace, f, g)
    ua = membership_oracle(sk.subspace, "U_A")
    uad = membership_oracle(sk.dual, "U_Adual")
    return CpProgram(
        state=prepare_subspace_state(sk.subspace, "v"),
        evaluator=make_cp_evaluator(sk.lam, f.input_bits, f.value_bits),
        oracles={"o1": o1, "o2": o2},
        membership=(ua, uad),
        lam=sk.lam,
        domain=f.domain,
        value_bits=f.value_bits,
    )


def _scratch_layout(lam_state: QuantumState, value_bits: int) -> QuantumState:
    out = QuantumState.basis(RegisterLayout.of(("out", 1 + value_bits)))
    return lam_state.tensor(out)


def _split_enc(enc: int, m: int) -> tuple[int, int]:
    return enc >> m, enc & ((1 << m) - 1)


def compute(
    prog: CpProgram, x: int, rng: np.random.Generator
) -> tuple[int | None, CpProgram]:
    """Evaluate the program once; returns (answer or None for bottom, reused program).

    The output register is measured after each oracle query; on a first
    stage bottom the call aborts immediately with the (slightly disturbed)
    program. Callers may retry; there is no automatic retry.
    """
    if not 0 <= x < prog.domain:
        raise DimensionError(f"input {x} outside the domain [{prog.domain}]")
    m = prog.value_bits
    o1, o2 = prog.oracles["o1"], prog.oracles["o2"]
    joint = _scratch_layout(prog.state, m)

    joint = run_ops(joint, [OracleCall.bind(o1, "out", x=x, v="v")])
    enc1, joint, _ = measure_register(joint, "out", rng)
    joint = run_ops(joint, [LoadConstant("out", enc1)], record=False)  # reset scratch
    flag1, y1 = _split_enc(enc1, m)
    if not flag1:
        return None, replace(prog, state=drop_register(joint, "out"))

    joint = hadamard_all(joint, "v")
    joint = run_ops(joint, [OracleCall.bind(o2, "out", x=x, v="v")])
    enc2, joint, _ = measure_register(joint, "out", rng)
    joint = run_ops(joint, [LoadConstant("out", enc2)], record=False)
    flag2, y2 = _split_enc(enc2, m)
    joint = hadamard_all(joint, "v")  # back to the A-side basis

    new_prog = replace(prog, state=drop_register(joint, "out"))
    return ((y1 ^ y2) if flag2 else None, new_prog)


def compute_success_path(
    prog: CpProgram, x: int
) -> tuple[int, float, float, CpProgram]:
    """Deterministically follow the double-success branch of one evaluation.

    Returns (answer, first-stage validity probability, second-stage validity
    probability conditioned on the first, program after the call). Used by
    the demo and by exactness tests; the honest sampling path is compute().
    """
    if not 0 <= x < prog.domain:
        raise DimensionError(f"input {x} outside the domain [{prog.domain}]")
    m = prog.value_bits
    o1, o2 = prog.oracles["o1"], prog.oracles["o2"]
    joint = _scratch_layout(prog.state, m)

    joint = run_ops(joint, [OracleCall.bind(o1, "out", x=x, v="v")])
    enc1, p1 = _valid_branch(joint, m)
    joint = collapse_register(joint, "out", enc1)
    joint = run_ops(joint, [LoadConstant("out", enc1)], record=False)

    joint = hadamard_all(joint, "v")
    joint = run_ops(joint, [OracleCall.bind(o2, "out", x=x, v="v")])
    enc2, p2 = _valid_branch(joint, m)
    joint = collapse_register(joint, "out", enc2)
    joint = run_ops(joint, [LoadConstant("out", enc2)], record=False)
    joint = hadamard_all(joint, "v")

    y = (enc1 ^ enc2) & ((1 << m) - 1)
    return y, p1, p2, replace(prog, state=drop_register(joint, "out"))


def _valid_branch(joint: QuantumState, m: int) -> tuple[int, float]:
    dist = register_distribution(joint, "out")
    valid = [(enc, p) for enc, p in enumerate(dist) if p > 0 and (enc >> m)]
    if not valid:
        raise DimensionError("no valid branch to follow")
    if len(valid) > 1:
        raise DimensionError("valid oracle answer is not unique; scheme invariant broken")
    return valid[0][0], float(valid[0][1])


def sign_token_bit(state: QuantumState, b: int, rng: np.random.Generator) -> F2Vector:
    """Consume a subspace state as a signature token for bit b.

    Measuring |A> directly yields a vector of A (b = 0); measuring after a
    full Hadamard yields a vector of the dual (b = 1). The zero vector
    comes out with probability 1/|A|.
    """
    if b not in (0, 1):
        raise DimensionError("bit must be 0 or 1")
    (reg, n), = state.layout.registers
    if b == 1:
        state = hadamard_all(state, reg)
    outcome, _, _ = measure_register(state, reg, rng)
    return F2Vector(n, outcome)
