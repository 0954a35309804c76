"""Reversible classical-function gates with query instrumentation.

Every oracle acts as |in, y> -> |in, y (+) enc(O(in))>, an involution. For
oracles that can answer bottom, the output wires are one validity bit
followed by the value bits: enc(value) = (1 << m) | value, enc(bottom) = 0.
The all-zero encoding keeps the gate an involution and makes bottom
distinguishable from the legal value 0.

An oracle's input is split into named fields (e.g. x and v). Each gate
application binds every field either to a register of the circuit or to a
classical constant, and may record, for each registered flagged set, the
squared-amplitude mass the pre-query state places on flagged field values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionError
from .f2 import F2Subspace
from .qsim import QuantumState, RegisterLayout, _fwht_vec


@dataclass(frozen=True)
class ClassicalFunction:
    """A total function [2^input_bits] -> [2^value_bits] held as a table."""

    input_bits: int
    value_bits: int
    table: tuple[int, ...]

    def __post_init__(self):
        if len(self.table) != 1 << self.input_bits:
            raise DimensionError("table length must be 2^input_bits")
        if any(t < 0 or t >> self.value_bits for t in self.table):
            raise DimensionError("table entry out of range")

    @classmethod
    def from_table(cls, table: Sequence[int], value_bits: int) -> "ClassicalFunction":
        n = len(table)
        if n & (n - 1):
            raise DimensionError("domain size must be a power of two")
        return cls(n.bit_length() - 1, value_bits, tuple(int(t) for t in table))

    @classmethod
    def random(cls, domain: int, value_bits: int, rng: np.random.Generator) -> "ClassicalFunction":
        if domain & (domain - 1):
            raise DimensionError("domain size must be a power of two")
        table = rng.integers(0, 1 << value_bits, size=domain)
        return cls(domain.bit_length() - 1, value_bits, tuple(int(t) for t in table))

    @property
    def domain(self) -> int:
        return 1 << self.input_bits

    def __call__(self, x: int) -> int:
        return self.table[x]

    def xor(self, other: "ClassicalFunction") -> "ClassicalFunction":
        if (self.input_bits, self.value_bits) != (other.input_bits, other.value_bits):
            raise DimensionError("xor of functions with different shapes")
        return ClassicalFunction(
            self.input_bits, self.value_bits,
            tuple(a ^ b for a, b in zip(self.table, other.table)),
        )


@dataclass(frozen=True)
class QueryWeightRecord:
    query_index: int      # 1-based, per oracle instance
    oracle: str
    flag_set: str
    weight: float


class InstrumentedOracle:
    """An involutive classical-oracle gate with a per-run query transcript."""

    def __init__(
        self,
        name: str,
        fields: Sequence[tuple[str, int]],
        value_bits: int,
        enc_table: np.ndarray,
        *,
        has_flag: bool = False,
        flag_sets: Mapping[str, tuple[str, np.ndarray]] | None = None,
    ):
        self.name = name
        self.fields = tuple((str(f), int(w)) for f, w in fields)
        self.value_bits = int(value_bits)
        self.has_flag = bool(has_flag)
        self.in_bits = sum(w for _, w in self.fields)
        self.out_bits = self.value_bits + (1 if has_flag else 0)
        enc_table = np.asarray(enc_table, dtype=np.int64)
        if enc_table.shape != (1 << self.in_bits,):
            raise DimensionError("enc table length must be 2^in_bits")
        if enc_table.max(initial=0) >> self.out_bits:
            raise DimensionError("enc table entry wider than output wires")
        self.enc_table = enc_table
        self.flag_sets: dict[str, tuple[str, np.ndarray]] = {}
        for fid, (fname, mask) in (flag_sets or {}).items():
            self.add_flag_set(fid, fname, mask)
        self.overrides: dict[int, np.ndarray] = {}  # query index -> inputs answered bottom
        self.transcript: list[QueryWeightRecord] = []
        self.queries = 0
        self.recording = True

    def field_shift(self, fname: str) -> int:
        pos = self.in_bits
        for f, w in self.fields:
            pos -= w
            if f == fname:
                return pos
        raise DimensionError(f"oracle {self.name} has no field {fname!r}")

    def field_width(self, fname: str) -> int:
        for f, w in self.fields:
            if f == fname:
                return w
        raise DimensionError(f"oracle {self.name} has no field {fname!r}")

    def add_flag_set(self, flag_id: str, fname: str, mask: np.ndarray):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (1 << self.field_width(fname),):
            raise DimensionError("flag mask length must be 2^field_width")
        self.flag_sets[flag_id] = (fname, mask)

    def semantics(self, packed: int) -> int | None:
        """Decoded answer for a packed input: a value or None for bottom."""
        enc = int(self.enc_table[packed])
        if self.has_flag and not (enc >> self.value_bits):
            return None
        return enc & ((1 << self.value_bits) - 1)

    def reset_transcript(self):
        self.transcript = []
        self.queries = 0

    def modified(self, flipped: Iterable[tuple[int, int]], name: str | None = None) -> "InstrumentedOracle":
        """A copy whose answers at the given (query_index, input) pairs are bottom."""
        clone = InstrumentedOracle(
            name or f"{self.name}~",
            self.fields,
            self.value_bits,
            self.enc_table,
            has_flag=self.has_flag,
            flag_sets=self.flag_sets,
        )
        for qi, packed in flipped:
            mask = clone.overrides.setdefault(int(qi), np.zeros(1 << self.in_bits, dtype=bool))
            mask[int(packed)] = True
        return clone


def classical_gate(f: ClassicalFunction, name: str = "Uf") -> InstrumentedOracle:
    """Plain XOR gate for a total function: |x, y> -> |x, y (+) f(x)>."""
    return InstrumentedOracle(
        name, (("x", f.input_bits),), f.value_bits, np.asarray(f.table, dtype=np.int64)
    )


def membership_oracle(space: F2Subspace, name: str | None = None) -> InstrumentedOracle:
    """One-bit oracle answering 1 iff v is a nonzero member of the subspace."""
    table = space.indicator().astype(np.int64)
    table[0] = 0
    return InstrumentedOracle(name or "U_S", (("v", space.n),), 1, table)


def _nonzero_mask(space: F2Subspace) -> np.ndarray:
    mask = space.indicator()
    mask[0] = False
    return mask


def _cp_enc_table(space_mask: np.ndarray, payload: ClassicalFunction, n: int) -> np.ndarray:
    m = payload.value_bits
    xs = np.arange(1 << payload.input_bits, dtype=np.int64)
    vals = np.asarray(payload.table, dtype=np.int64)[xs] | (1 << m)
    # outer combine: index = (x << n) | v
    table = np.where(space_mask[None, :], vals[:, None], 0)
    return table.reshape(-1)


def cp_oracles(
    A: F2Subspace, f: ClassicalFunction, g: ClassicalFunction
) -> tuple[InstrumentedOracle, InstrumentedOracle]:
    """The copy-protection oracle pair.

    O1 answers f(x) (+) g(x) on nonzero members of A, bottom otherwise;
    O2 answers g(x) on nonzero members of the dual, bottom otherwise. Both
    carry flagged sets for the nonzero vectors of A and of its dual.
    """
    if (f.input_bits, f.value_bits) != (g.input_bits, g.value_bits):
        raise DimensionError("f and g must share domain and output width")
    mask_a = _nonzero_mask(A)
    mask_d = _nonzero_mask(A.dual())
    flags = {"A_nonzero": ("v", mask_a), "Adual_nonzero": ("v", mask_d)}
    fields = (("x", f.input_bits), ("v", A.n))
    o1 = InstrumentedOracle("O1", fields, f.value_bits, _cp_enc_table(mask_a, f.xor(g), A.n),
                            has_flag=True, flag_sets=flags)
    o2 = InstrumentedOracle("O2", fields, f.value_bits, _cp_enc_table(mask_d, g, A.n),
                            has_flag=True, flag_sets=flags)
    return o1, o2


def swapped_cp_oracles(
    A: F2Subspace, f: ClassicalFunction, g: ClassicalFunction
) -> tuple[InstrumentedOracle, InstrumentedOracle]:
    """The reduction's partially swapped pair: O1' answers g, O2' answers f (+) g."""
    if (f.input_bits, f.value_bits) != (g.input_bits, g.value_bits):
        raise DimensionError("f and g must share domain and output width")
    mask_a = _nonzero_mask(A)
    mask_d = _nonzero_mask(A.dual())
    flags = {"A_nonzero": ("v", mask_a), "Adual_nonzero": ("v", mask_d)}
    fields = (("x", f.input_bits), ("v", A.n))
    o1 = InstrumentedOracle("O1'", fields, f.value_bits, _cp_enc_table(mask_a, g, A.n),
                            has_flag=True, flag_sets=flags)
    o2 = InstrumentedOracle("O2'", fields, f.value_bits, _cp_enc_table(mask_d, f.xor(g), A.n),
                            has_flag=True, flag_sets=flags)
    return o1, o2


def bot_oracle(
    fields: Sequence[tuple[str, int]], value_bits: int, name: str = "Obot"
) -> InstrumentedOracle:
    """Answers bottom on every input; the gate is the identity but still counts queries."""
    in_bits = sum(w for _, w in fields)
    return InstrumentedOracle(
        name, fields, value_bits, np.zeros(1 << in_bits, dtype=np.int64), has_flag=True
    )


def query_weight(
    transcript: Iterable[QueryWeightRecord], flag_set: str, oracle: str | None = None
) -> float:
    """Total flagged query weight, summed over recorded queries."""
    found = False
    total = 0.0
    for rec in transcript:
        if rec.flag_set == flag_set and (oracle is None or rec.oracle == oracle):
            found = True
            total += rec.weight
    if not found:
        raise DimensionError(f"no transcript records for flag set {flag_set!r}")
    return total


def bbbv_modify(oracle: InstrumentedOracle, flipped: Iterable[tuple[int, int]]) -> InstrumentedOracle:
    """Oracle with the answers at the given (query index, input) pairs fixed to bottom."""
    return oracle.modified(flipped)


def transcript_rows(trial: int, *oracles: InstrumentedOracle) -> list[tuple]:
    rows = []
    for o in oracles:
        for rec in o.transcript:
            rows.append((trial, rec.oracle, rec.query_index, rec.flag_set, rec.weight))
    return rows


def write_transcript_csv(path, rows: Iterable[tuple]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "oracle", "query_index", "flag_set", "weight"])
        w.writerows(rows)


# ---------------------------------------------------------------------------
# circuit operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleCall:
    """Apply an oracle gate; each field bound to a register name or a constant."""

    oracle: InstrumentedOracle
    bindings: tuple[tuple[str, str | int], ...]
    out: str

    @classmethod
    def bind(cls, oracle: InstrumentedOracle, out: str, **bindings: str | int) -> "OracleCall":
        return cls(oracle, tuple(sorted(bindings.items())), out)

    def binding(self, fname: str) -> str | int:
        for f, b in self.bindings:
            if f == fname:
                return b
        raise DimensionError(f"field {fname!r} not bound")


@dataclass(frozen=True)
class HadamardAllOp:
    reg: str


@dataclass(frozen=True)
class UnitaryOp:
    matrix: np.ndarray
    regs: tuple[str, ...]

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) > 1e-9:
            raise DimensionError("UnitaryOp matrix is not unitary")


@dataclass(frozen=True)
class LoadConstant:
    """XOR a constant into a register (prepares |c> from |0>)."""

    reg: str
    value: int


@dataclass(frozen=True)
class TableXor:
    """dst (+)= table[packed value of src registers]; an involution."""

    srcs: tuple[str, ...]
    dst: str
    table: tuple[int, ...]


Op = OracleCall | HadamardAllOp | UnitaryOp | LoadConstant | TableXor

_IDX_CACHE: dict[int, np.ndarray] = {}
_REG_VALUE_CACHE: dict[tuple, np.ndarray] = {}


def _indices(dim: int) -> np.ndarray:
    arr = _IDX_CACHE.get(dim)
    if arr is None:
        arr = np.arange(dim, dtype=np.int64)
        arr.flags.writeable = False
        _IDX_CACHE[dim] = arr
    return arr


def register_values(layout: RegisterLayout, reg: str) -> np.ndarray:
    """Cached per-flat-index packed value of a register."""
    key = (layout, reg)
    arr = _REG_VALUE_CACHE.get(key)
    if arr is None:
        shift = layout.shift(reg)
        arr = (_indices(layout.dim) >> shift) & ((1 << layout.size(reg)) - 1)
        arr.flags.writeable = False
        _REG_VALUE_CACHE[key] = arr
    return arr


def _field_values(layout: RegisterLayout, binding: str | int, width: int):
    """Per-index field value (array), or a scalar for constant bindings."""
    if isinstance(binding, (int, np.integer)):
        return int(binding)
    if layout.size(binding) != width:
        raise DimensionError(
            f"register {binding!r} width {layout.size(binding)} != oracle field width {width}"
        )
    return register_values(layout, binding)


def _oracle_input(layout: RegisterLayout, call: OracleCall):
    """Packed oracle input per flat index (array, or scalar if fully constant)."""
    oracle = call.oracle
    total = 0
    for fname, width in oracle.fields:
        vals = _field_values(layout, call.binding(fname), width)
        total = total + (vals << oracle.field_shift(fname))
    return total


def _record_weights(layout: RegisterLayout, call: OracleCall, probs: np.ndarray):
    oracle = call.oracle
    qi = oracle.queries  # already incremented by caller: 1-based index
    for fid, (fname, mask) in oracle.flag_sets.items():
        vals = _field_values(layout, call.binding(fname), oracle.field_width(fname))
        if isinstance(vals, int):
            w = float(probs.sum()) if mask[vals] else 0.0
        else:
            w = float(probs[mask[vals]].sum())
        oracle.transcript.append(QueryWeightRecord(qi, oracle.name, fid, w))


def _apply_oracle(
    arr: np.ndarray,
    layout: RegisterLayout,
    call: OracleCall,
    *,
    record: bool,
    count: bool,
    density: bool,
) -> np.ndarray:
    oracle = call.oracle
    out_shift = layout.shift(call.out)
    if layout.size(call.out) != oracle.out_bits:
        raise DimensionError(
            f"output register {call.out!r} width {layout.size(call.out)} "
            f"!= oracle output width {oracle.out_bits}"
        )
    if count:
        oracle.queries += 1
    if count and record and oracle.recording and oracle.flag_sets:
        probs = np.real(np.diagonal(arr)).clip(min=0.0) if density else np.abs(arr) ** 2
        _record_weights(layout, call, probs)
    in_val = _oracle_input(layout, call)
    enc = oracle.enc_table[in_val]
    override = oracle.overrides.get(oracle.queries) if count else None
    if override is not None:
        if isinstance(in_val, int):
            enc = 0 if override[in_val] else enc
        else:
            enc = np.where(override[in_val], 0, enc)
    perm = _indices(layout.dim) ^ (enc << out_shift)
    if density:
        return arr[np.ix_(perm, perm)]
    if arr.ndim == 1:
        return arr[perm]
    return arr[perm, :]


def apply_op(state: QuantumState, op: Op, *, record: bool = True) -> QuantumState:
    """Apply one circuit operation to a state, returning a new state."""
    from . import qsim  # local import to avoid cycle at module load

    layout = state.layout
    if isinstance(op, HadamardAllOp):
        return qsim.hadamard_all(state, op.reg)
    if isinstance(op, UnitaryOp):
        return qsim.apply_unitary(state, op.matrix, op.regs)
    if isinstance(op, OracleCall):
        data = _apply_oracle(
            state.data, layout, op, record=record, count=True, density=not state.pure
        )
        return QuantumState(layout, data, validate=False)
    if isinstance(op, LoadConstant):
        perm = _indices(layout.dim) ^ (op.value << layout.shift(op.reg))
        data = state.data[perm] if state.pure else state.data[np.ix_(perm, perm)]
        return QuantumState(layout, data, validate=False)
    if isinstance(op, TableXor):
        src_val = 0
        for s in op.srcs:
            src_val = (src_val << layout.size(s)) + (
                (_indices(layout.dim) >> layout.shift(s)) & ((1 << layout.size(s)) - 1)
            )
        table = np.asarray(op.table, dtype=np.int64)
        perm = _indices(layout.dim) ^ (table[src_val] << layout.shift(op.dst))
        data = state.data[perm] if state.pure else state.data[np.ix_(perm, perm)]
        return QuantumState(layout, data, validate=False)
    raise DimensionError(f"unknown op {op!r}")


def run_ops(state: QuantumState, ops: Iterable[Op], *, record: bool = True) -> QuantumState:
    for op in ops:
        state = apply_op(state, op, record=record)
    return state


def run_ops_batch(arr: np.ndarray, layout: RegisterLayout, ops: Iterable[Op]) -> np.ndarray:
    """Apply ops to a (dim, batch) array of column states.

    Used for operator assembly; neither query counters nor transcripts are
    touched, since this is not a run of any program.
    """
    for op in ops:
        if isinstance(op, OracleCall):
            arr = _apply_oracle(arr, layout, op, record=False, count=False, density=False)
        elif isinstance(op, HadamardAllOp):
            arr = _fwht_vec(arr, layout.shift(op.reg), layout.size(op.reg))
        elif isinstance(op, LoadConstant):
            perm = _indices(layout.dim) ^ (op.value << layout.shift(op.reg))
            arr = arr[perm, :]
        elif isinstance(op, TableXor):
            src_val = 0
            for s in op.srcs:
                src_val = (src_val << layout.size(s)) + (
                    (_indices(layout.dim) >> layout.shift(s)) & ((1 << layout.size(s)) - 1)
                )
            table = np.asarray(op.table, dtype=np.int64)
            perm = _indices(layout.dim) ^ (table[src_val] << layout.shift(op.dst))
            arr = arr[perm, :]
        elif isinstance(op, UnitaryOp):
            raise DimensionError("UnitaryOp not supported in batch mode")
        else:
            raise DimensionError(f"unknown op {op!r}")
    return arr


def invert_ops(ops: Sequence[Op]) -> list[Op]:
    """The inverse circuit; every op here is an involution except UnitaryOp."""
    out: list[Op] = []
    for op in reversed(ops):
        if isinstance(op, UnitaryOp):
            out.append(UnitaryOp(np.asarray(op.matrix).conj().T, op.regs))
        else:
            out.append(op)
    return out


def oracle_matrix(layout: RegisterLayout, call: OracleCall) -> np.ndarray:
    """Dense matrix of a single oracle gate (small layouts only)."""
    if layout.dim > 1 << 10:
        raise DimensionError("dense oracle matrix capped at 2^10")
    in_val = _oracle_input(layout, call)
    enc = call.oracle.enc_table[in_val]
    perm = _indices(layout.dim) ^ (enc << layout.shift(call.out))
    mat = np.zeros((layout.dim, layout.dim))
    mat[perm, _indices(layout.dim)] = 1.0
    return mat
