"""Exact state-vector and density-matrix simulation over named registers.

Registers are laid out big-endian: the first register owns the most
significant bits of the flat basis index, and qubit 0 of a register is its
own most significant bit. With vectors packed the same way (see f2), the
subspace state |A> simply places amplitude 1/sqrt|A| at index v.bits for
each member v.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DimensionError, ResourceLimitError
from .f2 import F2Subspace

PURE_QUBIT_CAP = 22
MIXED_QUBIT_CAP = 12

NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-9
PSD_EIG_FLOOR = -1e-9


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered named registers; first register = most significant index bits."""

    registers: tuple[tuple[str, int], ...]

    def __post_init__(self):
        names = [name for name, _ in self.registers]
        if len(set(names)) != len(names):
            raise DimensionError(f"duplicate register names in {names}")
        if any(size <= 0 for _, size in self.registers):
            raise DimensionError("register sizes must be positive")

    @classmethod
    def of(cls, *regs: tuple[str, int]) -> "RegisterLayout":
        return cls(tuple((str(n), int(s)) for n, s in regs))

    @property
    def total_qubits(self) -> int:
        return sum(size for _, size in self.registers)

    @property
    def dim(self) -> int:
        return 1 << self.total_qubits

    def size(self, name: str) -> int:
        for n, s in self.registers:
            if n == name:
                return s
        raise DimensionError(f"unknown register {name!r}")

    def shift(self, name: str) -> int:
        """Bit shift of a register's least significant bit within the flat index."""
        pos = self.total_qubits
        for n, s in self.registers:
            pos -= s
            if n == name:
                return pos
        raise DimensionError(f"unknown register {name!r}")

    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.registers)

    def value_of(self, indices: np.ndarray | int, name: str):
        """Extract a register's packed value from flat basis indices."""
        return (indices >> self.shift(name)) & ((1 << self.size(name)) - 1)

    def extend(self, *regs: tuple[str, int]) -> "RegisterLayout":
        return RegisterLayout(self.registers + tuple((str(n), int(s)) for n, s in regs))


def _check_pure(vec: np.ndarray):
    norm = np.linalg.norm(vec)
    if abs(norm - 1.0) > NORM_TOL:
        raise DimensionError(f"pure state norm {norm} deviates from 1 beyond {NORM_TOL}")


def _check_mixed(mat: np.ndarray):
    if np.max(np.abs(mat - mat.conj().T)) > HERMITIAN_TOL:
        raise DimensionError("density matrix is not Hermitian within tolerance")
    tr = np.trace(mat).real
    if abs(tr - 1.0) > NORM_TOL:
        raise DimensionError(f"density matrix trace {tr} deviates from 1 beyond {NORM_TOL}")
    eigs = np.linalg.eigvalsh(mat)
    if eigs.min() < PSD_EIG_FLOOR:
        raise DimensionError(f"density matrix has negative eigenvalue {eigs.min()}")


class QuantumState:
    """Immutable pure or mixed state over a RegisterLayout."""

    __slots__ = ("layout", "data", "pure")

    def __init__(self, layout: RegisterLayout, data: np.ndarray, *, validate: bool = True):
        data = np.asarray(data, dtype=np.complex128)
        pure = data.ndim == 1
        if pure:
            if data.shape != (layout.dim,):
                raise DimensionError(f"state vector length {data.shape} != layout dim {layout.dim}")
            cap = PURE_QUBIT_CAP
        else:
            if data.shape != (layout.dim, layout.dim):
                raise DimensionError("density matrix shape does not match layout")
            cap = MIXED_QUBIT_CAP
        if layout.total_qubits > cap:
            raise ResourceLimitError(
                f"{layout.total_qubits} qubits exceeds the "
                f"{'pure' if pure else 'mixed'} cap of {cap}"
            )
        if validate:
            (_check_pure if pure else _check_mixed)(data)
        data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "pure", pure)

    def __setattr__(self, *_):
        raise AttributeError("QuantumState is immutable")

    @classmethod
    def basis(cls, layout: RegisterLayout, index: int = 0) -> "QuantumState":
        vec = np.zeros(layout.dim, dtype=np.complex128)
        vec[index] = 1.0
        return cls(layout, vec, validate=False)

    def density(self) -> np.ndarray:
        """Density matrix view (outer product for pure states)."""
        if self.pure:
            return np.outer(self.data, self.data.conj())
        return np.asarray(self.data)

    def to_mixed(self) -> "QuantumState":
        if not self.pure:
            return self
        return QuantumState(self.layout, self.density(), validate=False)

    def probabilities(self) -> np.ndarray:
        if self.pure:
            return np.abs(self.data) ** 2
        return np.real(np.diag(self.data)).clip(min=0.0)

    def tensor(self, other: "QuantumState") -> "QuantumState":
        layout = RegisterLayout(self.layout.registers + other.layout.registers)
        if self.pure and other.pure:
            return QuantumState(layout, np.kron(self.data, other.data), validate=False)
        return QuantumState(layout, np.kron(self.density(), other.density()), validate=False)

    def to_json(self) -> str:
        flat = np.asarray(self.data).ravel()
        interleaved = np.empty(2 * flat.size)
        interleaved[0::2] = flat.real
        interleaved[1::2] = flat.imag
        return json.dumps(
            {
                "layout": [[n, s] for n, s in self.layout.registers],
                "form": "pure" if self.pure else "mixed",
                "data": interleaved.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "QuantumState":
        obj = json.loads(text)
        layout = RegisterLayout(tuple((n, int(s)) for n, s in obj["layout"]))
        raw = np.asarray(obj["data"])
        flat = raw[0::2] + 1j * raw[1::2]
        if obj["form"] == "pure":
            return cls(layout, flat)
        return cls(layout, flat.reshape(layout.dim, layout.dim))


def prepare_subspace_state(space: F2Subspace, register: str = "v") -> QuantumState:
    """|A>: the uniform superposition over all vectors of the subspace."""
    if space.n > PURE_QUBIT_CAP:
        raise ResourceLimitError(f"ambient dimension {space.n} exceeds the pure cap")
    layout = RegisterLayout.of((register, space.n))
    vec = np.zeros(layout.dim, dtype=np.complex128)
    vec[space.enumerate_bits()] = 1.0 / np.sqrt(space.size)
    return QuantumState(layout, vec, validate=False)


def _fwht_vec(vec: np.ndarray, shift: int, k: int) -> np.ndarray:
    """H^(x)k on the k qubits whose flat-index bits are [shift, shift+k)."""
    post = 1 << shift
    pre = vec.shape[0] >> (shift + k)
    rest = vec.shape[1:]
    work = vec.reshape((pre, 1 << k, post) + rest).copy()
    h = 1
    while h < (1 << k):
        a = work.reshape(pre, -1, 2 * h, post, *rest)
        x = a[:, :, :h].copy()
        y = a[:, :, h:].copy()
        a[:, :, :h] = x + y
        a[:, :, h:] = x - y
        h *= 2
    work *= 2 ** (-k / 2)
    return work.reshape(vec.shape)


def hadamard_all(state: QuantumState, register: str) -> QuantumState:
    """Apply H to every qubit of the named register (the GF(2)^n Fourier transform)."""
    k = state.layout.size(register)
    shift = state.layout.shift(register)
    if state.pure:
        return QuantumState(state.layout, _fwht_vec(state.data, shift, k), validate=False)
    m = _fwht_vec(state.data, shift, k)          # rows
    m = _fwht_vec(m.T, shift, k).T               # columns (H real)
    return QuantumState(state.layout, m, validate=False)


def apply_unitary(state: QuantumState, matrix: np.ndarray, registers: Iterable[str]) -> QuantumState:
    """Apply a unitary on the combined space of the named registers (in order)."""
    regs = tuple(registers)
    k = sum(state.layout.size(r) for r in regs)
    matrix = np.asarray(matrix, dtype=np.complex128)
    if matrix.shape != (1 << k, 1 << k):
        raise DimensionError("unitary dimension does not match target registers")
    perm_bits: list[int] = []
    for r in regs:
        sh = state.layout.shift(r)
        perm_bits.extend(range(sh + state.layout.size(r) - 1, sh - 1, -1))
    Q = state.layout.total_qubits
    axes = [Q - 1 - b for b in perm_bits]  # tensor axes of the target qubits, MSB first
    rest = [a for a in range(Q) if a not in axes]

    def act(vec: np.ndarray) -> np.ndarray:
        t = vec.reshape((2,) * Q)
        t = np.transpose(t, axes + rest)
        t = matrix @ t.reshape(1 << k, -1)
        t = t.reshape([2] * Q)
        inv = np.argsort(axes + rest)
        return np.transpose(t, inv).reshape(vec.shape[0])

    if state.pure:
        return QuantumState(state.layout, act(state.data), validate=False)
    m = np.stack([act(col) for col in state.data.T], axis=1)   # U rho
    m = np.stack([act(col.conj()).conj() for col in m], axis=0)  # (U (U rho)^dag)^dag = U rho U^dag
    return QuantumState(state.layout, m, validate=False)


def partial_trace(state: QuantumState, keep: Iterable[str]) -> QuantumState:
    """Trace out all registers not in `keep`; returns a mixed state."""
    keep = list(keep)
    names = state.layout.names()
    for k in keep:
        if k not in names:
            raise DimensionError(f"unknown register {k!r}")
    keep_ordered = [n for n in names if n in keep]
    sizes = [s for _, s in state.layout.registers]
    keep_axes = [i for i, (n, _) in enumerate(state.layout.registers) if n in keep]
    drop_axes = [i for i, (n, _) in enumerate(state.layout.registers) if n not in keep]
    dims = [1 << s for s in sizes]
    kdim = int(np.prod([dims[i] for i in keep_axes])) if keep_axes else 1

    if state.pure:
        t = state.data.reshape(dims)
        rho = np.tensordot(t, t.conj(), axes=(drop_axes, drop_axes))
        half = rho.ndim // 2
        rho = rho.reshape(kdim, kdim) if half else rho.reshape(1, 1)
    else:
        t = state.data.reshape(dims + dims)
        n_ax = len(dims)
        for off, ax in enumerate(sorted(drop_axes, reverse=True)):
            t = np.trace(t, axis1=ax, axis2=ax + n_ax - off)
            n_ax -= 1
        rho = t.reshape(kdim, kdim)
    new_layout = RegisterLayout(tuple((n, s) for n, s in state.layout.registers if n in keep))
    return QuantumState(new_layout, rho, validate=False)


def purify(state: QuantumState, register: str = "purifier") -> QuantumState:
    """A pure state over (original registers, fresh register) whose partial trace is the input."""
    if state.pure:
        rho = state.density()
    else:
        rho = np.asarray(state.data)
    eigs, vecs = np.linalg.eigh(rho)
    eigs = eigs.clip(min=0.0)
    rank = max(1, int(np.sum(eigs > 1e-15)))
    qb = max(1, int(np.ceil(np.log2(rank))))
    layout = state.layout.extend((register, qb))
    psi = np.zeros(layout.dim, dtype=np.complex128)
    order = np.argsort(eigs)[::-1]
    for j, idx in enumerate(order[: 1 << qb]):
        if eigs[idx] <= 0:
            continue
        psi += np.sqrt(eigs[idx]) * np.kron(vecs[:, idx], _basis_vec(1 << qb, j))
    psi /= np.linalg.norm(psi)
    return QuantumState(layout, psi, validate=False)


def _basis_vec(dim: int, j: int) -> np.ndarray:
    v = np.zeros(dim, dtype=np.complex128)
    v[j] = 1.0
    return v


def trace_distance(a: QuantumState, b: QuantumState) -> float:
    """Half the sum of singular values of (rho_a - rho_b).

    For two pure states this equals sqrt(1 - |<a|b>|^2), which avoids
    forming the density matrices.
    """
    if a.layout != b.layout:
        raise DimensionError("trace distance requires identical layouts")
    if a.pure and b.pure:
        # norm of b's component orthogonal to a; stable near identical states
        c = np.vdot(a.data, b.data)
        resid = b.data - c * a.data
        return float(min(np.linalg.norm(resid), 1.0))
    diff = a.density() - b.density()
    return 0.5 * float(np.sum(np.linalg.svd(diff, compute_uv=False)))


def fidelity(a: QuantumState, b: QuantumState) -> float:
    """Uhlmann fidelity; reduces to |<a|b>|^2 for pure states."""
    if a.layout != b.layout:
        raise DimensionError("fidelity requires identical layouts")
    if a.pure and b.pure:
        return float(abs(np.vdot(a.data, b.data)) ** 2)
    if a.pure:
        return float(np.real(np.vdot(a.data, b.density() @ a.data)))
    if b.pure:
        return fidelity(b, a)
    ra = a.density()
    eigs, vecs = np.linalg.eigh(ra)
    sq = (vecs * np.sqrt(eigs.clip(min=0.0))) @ vecs.conj().T
    inner = sq @ b.density() @ sq
    vals = np.linalg.eigvalsh(inner).clip(min=0.0)
    return float(np.sum(np.sqrt(vals)) ** 2)


def measure_register(
    state: QuantumState, register: str, rng: np.random.Generator
) -> tuple[int, QuantumState, float]:
    """Computational-basis measurement of a register.

    Returns (outcome, renormalized post-measurement state, outcome probability).
    """
    probs = register_distribution(state, register)
    outcome = int(rng.choice(len(probs), p=probs))
    post = collapse_register(state, register, outcome, probs[outcome])
    return outcome, post, float(probs[outcome])


def register_distribution(state: QuantumState, register: str) -> np.ndarray:
    size = state.layout.size(register)
    vals = state.layout.value_of(np.arange(state.layout.dim), register)
    weights = state.probabilities()
    probs = np.bincount(vals, weights=weights, minlength=1 << size)
    total = probs.sum()
    if total <= 0:
        raise DimensionError("state has no mass to measure")
    return probs / total


def collapse_register(
    state: QuantumState, register: str, outcome: int, prob: float | None = None
) -> QuantumState:
    vals = state.layout.value_of(np.arange(state.layout.dim), register)
    mask = vals == outcome
    if state.pure:
        vec = np.where(mask, state.data, 0.0)
        nrm = np.linalg.norm(vec)
        if nrm <= 0:
            raise DimensionError(f"outcome {outcome} has zero probability")
        return QuantumState(state.layout, vec / nrm, validate=False)
    sel = mask.astype(float)
    m = state.data * sel[:, None] * sel[None, :]
    tr = np.trace(m).real
    if tr <= 0:
        raise DimensionError(f"outcome {outcome} has zero probability")
    return QuantumState(state.layout, m / tr, validate=False)


def rename_register(state: QuantumState, old: str, new: str) -> QuantumState:
    """Relabel a register; purely a metadata change."""
    regs = tuple((new if n == old else n, s) for n, s in state.layout.registers)
    return QuantumState(RegisterLayout(regs), state.data, validate=False)


def drop_register(state: QuantumState, register: str, value: int = 0) -> QuantumState:
    """Remove a register known to be in the computational state |value>."""
    vals = state.layout.value_of(np.arange(state.layout.dim), register)
    mask = vals == value
    stray = 1.0 - float(state.probabilities()[mask].sum())
    if stray > 1e-10:
        raise DimensionError(
            f"register {register!r} is not deterministically |{value}> (stray mass {stray})"
        )
    new_layout = RegisterLayout(tuple(r for r in state.layout.registers if r[0] != register))
    if state.pure:
        vec = state.data[mask]
        return QuantumState(new_layout, vec / np.linalg.norm(vec), validate=False)
    m = state.data[np.ix_(mask, mask)]
    return QuantumState(new_layout, m / np.trace(m).real, validate=False)


def is_projector(matrix: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    matrix = np.asarray(matrix)
    return (
        np.max(np.abs(matrix - matrix.conj().T)) <= tol
        and np.max(np.abs(matrix @ matrix - matrix)) <= tol
    )


def gentle_measure(
    state: QuantumState, projector: np.ndarray
) -> tuple[int, QuantumState, float]:
    """Binary projective measurement following the dominant branch.

    Returns (outcome, post-state, distance) where outcome 0 means the
    projector branch, and distance = trace distance between the collapsed
    state and the input. When the taken branch has probability 1 - eps the
    disturbance obeys distance <= sqrt(eps); this is asserted on every call.
    """
    projector = np.asarray(projector, dtype=np.complex128)
    if projector.shape != (state.layout.dim, state.layout.dim) or not is_projector(projector):
        raise DimensionError("gentle_measure requires a projector matching the state dimension")
    p0 = float(np.real(np.vdot(state.data, projector @ state.data))) if state.pure else float(
        np.real(np.trace(projector @ state.data))
    )
    p0 = min(max(p0, 0.0), 1.0)
    take0 = p0 >= 0.5
    pi = projector if take0 else np.eye(state.layout.dim) - projector
    p_taken = p0 if take0 else 1.0 - p0
    if state.pure:
        vec = pi @ state.data
        post = QuantumState(state.layout, vec / np.linalg.norm(vec), validate=False)
    else:
        m = pi @ state.data @ pi
        post = QuantumState(state.layout, m / np.trace(m).real, validate=False)
    dist = trace_distance(post, state)
    eps = 1.0 - p_taken
    assert dist <= np.sqrt(max(eps, 0.0)) + 1e-9, (
        f"gentle measurement bound violated: distance {dist} > sqrt({eps})"
    )
    return (0 if take0 else 1, post, dist)


def random_pure(layout: RegisterLayout, rng: np.random.Generator) -> QuantumState:
    z = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
    return QuantumState(layout, z / np.linalg.norm(z), validate=False)


def random_mixed(layout: RegisterLayout, rng: np.random.Generator, rank: int | None = None) -> QuantumState:
    d = layout.dim
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    return QuantumState(layout, rho, validate=False)
