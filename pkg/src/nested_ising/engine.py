"""
State-vector evolution under the kicked Ising Floquet map.

One period is ``U_kick @ U_ising``: every ZZ phase first, then one 2x2 kick
per qubit.  All ZZ terms are diagonal, so they are fused into a single
precomputed phase table and applied in one sweep.  Kicks are applied qubit
by qubit with in-place pair updates.

The kernels are compiled with numba and release the GIL, so independent
trajectories can run on separate threads.  Each amplitude is written by
exactly one loop iteration with a fixed operation order, which keeps results
bitwise identical regardless of how many trajectories run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InvalidConfig,
    NonUnitaryGate,
    TooLarge,
)
from .model import KickField, ModelConfig, validate

DENSE_MAX_QUBITS = 10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
IDENTITY = np.eye(2, dtype=np.complex128)


class StateVector:
    """A normalised pure state of ``n`` qubits stored as ``2**n`` amplitudes."""

    __slots__ = ("amplitudes", "n")

    def __init__(self, amplitudes):
        amps = np.ascontiguousarray(amplitudes, dtype=np.complex128).ravel()
        n = int(amps.size).bit_length() - 1
        if amps.size != 1 << n or n < 1:
            raise DimensionMismatch(f"state length {amps.size} is not 2**n with n >= 1")
        self.amplitudes = amps
        self.n = n

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def to_bytes(self) -> bytes:
        """Little-endian interleaved (real, imag) float64 dump."""
        return self.amplitudes.astype("<c16").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "StateVector":
        return cls(np.frombuffer(data, dtype="<c16").copy())

    def __repr__(self):
        return f"StateVector(n={self.n})"


@dataclass(frozen=True)
class CompiledModel:
    """Engine-ready form of a :class:`ModelConfig`.

    zz_gates
        ``(j, k, strength)`` for every Ising term, ascending in ``(j, k)``.
    kick_gates
        ``(n, 2, 2)`` array, one kick unitary per qubit.
    """

    n: int
    zz_gates: tuple[tuple[int, int, float], ...]
    kick_gates: np.ndarray

    def __post_init__(self):
        self.kick_gates.setflags(write=False)

    @property
    def phase_table(self) -> np.ndarray:
        # cached lazily; frozen dataclass so go through __dict__
        table = self.__dict__.get("_phase_table")
        if table is None:
            table = zz_phase_table(self.n, self.zz_gates)
            table.setflags(write=False)
            self.__dict__["_phase_table"] = table
        return table

    @property
    def active_kicks(self) -> np.ndarray:
        """Indices of qubits whose kick is not exactly the identity."""
        table = self.__dict__.get("_active")
        if table is None:
            eye = np.eye(2)
            table = np.array(
                [q for q in range(self.n) if not np.array_equal(self.kick_gates[q], eye)],
                dtype=np.int64,
            )
            self.__dict__["_active"] = table
        return table


def kick_matrix(b: KickField | tuple[float, float, float]) -> np.ndarray:
    """``exp(-i b.sigma) = cos|b| I - i sin|b| (b/|b|).sigma``."""
    if isinstance(b, KickField):
        b = b.as_tuple()
    bx, by, bz = (float(x) for x in b)
    mag = math.sqrt(bx * bx + by * by + bz * bz)
    if mag == 0.0:
        return IDENTITY.copy()
    c, s = math.cos(mag), math.sin(mag) / mag
    return c * IDENTITY - 1j * s * (bx * SIGMA_X + by * SIGMA_Y + bz * SIGMA_Z)


def compile_model(config: ModelConfig, allow_negative: bool = False) -> CompiledModel:
    problems = validate(config, allow_negative=allow_negative)
    if problems:
        raise InvalidConfig(problems)
    layout = config.layout
    gates = {}

    def add(j, k, strength):
        key = (min(j, k), max(j, k))
        gates[key] = gates.get(key, 0.0) + strength

    for j, k, w in config.intra_links:
        add(j, k, config.J * w)
    for j, k in config.ce_links:
        add(j, k, config.lam)
    for j, k in config.eep_links:
        add(j, k, config.gamma)
    for j, k, s in config.cep_links:
        add(j, k, s)

    kicks = np.empty((layout.n, 2, 2), dtype=np.complex128)
    for name in ("c", "e", "ep"):
        u = kick_matrix(config.fields[name])
        for q in layout.subsystem(name):
            kicks[q] = u
    zz = tuple((j, k, s) for (j, k), s in sorted(gates.items()))
    return CompiledModel(n=layout.n, zz_gates=zz, kick_gates=kicks)


# --- kernels -----------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _zz_angles(n, js, ks, strengths):
    dim = 1 << n
    out = np.zeros(dim, dtype=np.float64)
    for g in range(js.size):
        j, k, s = js[g], ks[g], strengths[g]
        for i in range(dim):
            # parity of bits j and k: equal bits -> s_j s_k = +1
            if ((i >> j) ^ (i >> k)) & 1:
                out[i] += s
            else:
                out[i] -= s
    return out


def zz_phase_table(n: int, zz_gates) -> np.ndarray:
    """Per-basis-state factor ``exp(-i sum strength s_j s_k)``."""
    if zz_gates:
        js, ks, ss = (np.array(c) for c in zip(*zz_gates))
    else:
        js = ks = np.zeros(0, dtype=np.int64)
        ss = np.zeros(0)
    angles = _zz_angles(n, js.astype(np.int64), ks.astype(np.int64), ss.astype(np.float64))
    # angles holds -sum s_j s_k strength
    return np.exp(1j * angles)


@numba.njit(cache=True, nogil=True)
def _apply_diag(psi, phases):
    for i in range(psi.size):
        psi[i] *= phases[i]


def _apply_1q(psi, q, g):
    _pair_update(psi, 0, psi.size, 1 << q, g[0, 0], g[0, 1], g[1, 0], g[1, 1])


# Low qubits are processed block by block so each block stays in L1/L2
# while the diagonal and all low-qubit kicks are applied to it.
_BLOCK_BITS = 10


@numba.njit(cache=True, nogil=True, fastmath=True)
def _pair_update(psi, start, stop, stride, g00, g01, g10, g11):
    for b2 in range(start, stop, 2 * stride):
        for i0 in range(b2, b2 + stride):
            i1 = i0 + stride
            x = psi[i0]
            y = psi[i1]
            psi[i0] = g00 * x + g01 * y
            psi[i1] = g10 * x + g11 * y


@numba.njit(cache=True, nogil=True, fastmath=True)
def _evolve(psi, phases, kicks, active, steps, kick_first):
    dim = psi.size
    block = min(1 << _BLOCK_BITS, dim)
    for _ in range(steps):
        if kick_first:
            for a in range(active.size):
                q = active[a]
                g = kicks[q]
                _pair_update(psi, 0, dim, 1 << q, g[0, 0], g[0, 1], g[1, 0], g[1, 1])
            for i in range(dim):
                psi[i] *= phases[i]
            continue
        for base in range(0, dim, block):
            for i in range(base, base + block):
                psi[i] *= phases[i]
            for a in range(active.size):
                q = active[a]
                if (1 << q) < block:
                    g = kicks[q]
                    _pair_update(psi, base, base + block, 1 << q,
                                 g[0, 0], g[0, 1], g[1, 0], g[1, 1])
        for a in range(active.size):
            q = active[a]
            if (1 << q) >= block:
                g = kicks[q]
                _pair_update(psi, 0, dim, 1 << q, g[0, 0], g[0, 1], g[1, 0], g[1, 1])


# --- public operations -------------------------------------------------------

def _check_qubit(state: StateVector, j: int):
    if not 0 <= j < state.n:
        raise IndexOutOfRange(f"qubit index {j} out of range for n = {state.n}")


def apply_zz_phase(state: StateVector, j: int, k: int, strength: float) -> None:
    """Multiply each amplitude by ``exp(-i strength s_j s_k)`` in place."""
    _check_qubit(state, j)
    _check_qubit(state, k)
    if j == k:
        raise IndexOutOfRange(f"ZZ gate needs two distinct qubits, got {j} twice")
    phases = zz_phase_table(state.n, [(j, k, strength)])
    _apply_diag(state.amplitudes, phases)


def apply_kick(state: StateVector, j: int, gate) -> None:
    _check_qubit(state, j)
    gate = np.ascontiguousarray(gate, dtype=np.complex128)
    if gate.shape != (2, 2):
        raise NonUnitaryGate(f"expected a 2x2 gate, got shape {gate.shape}")
    if np.max(np.abs(gate.conj().T @ gate - IDENTITY)) > 1e-12:
        raise NonUnitaryGate("gate is not unitary to 1e-12")
    _apply_1q(state.amplitudes, j, gate)


def evolve(state: StateVector, model: CompiledModel, steps: int = 1,
           _kick_first: bool = False) -> None:
    """Apply ``steps`` Floquet periods to ``state`` in place.

    ``_kick_first`` swaps the operator order; it exists only so the
    verification suite can check that the dense oracle catches it.
    """
    if state.n != model.n:
        raise DimensionMismatch(f"state has {state.n} qubits, model has {model.n}")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if steps:
        _evolve(state.amplitudes, model.phase_table, model.kick_gates,
                model.active_kicks, int(steps), bool(_kick_first))


def floquet_step(state: StateVector, model: CompiledModel) -> None:
    evolve(state, model, 1)


def _embed(op: np.ndarray, q: int, n: int) -> np.ndarray:
    return np.kron(np.kron(np.eye(1 << (n - q - 1)), op), np.eye(1 << q))


def dense_floquet_matrix(model: CompiledModel) -> np.ndarray:
    """Explicit ``2**n x 2**n`` Floquet unitary built from Kronecker products.

    Independent of the fast kernels; used as the verification oracle.
    """
    n = model.n
    if n > DENSE_MAX_QUBITS:
        raise TooLarge(f"dense Floquet matrix limited to n <= {DENSE_MAX_QUBITS}, got {n}")
    dim = 1 << n
    u_ising = np.eye(dim, dtype=np.complex128)
    for j, k, s in model.zz_gates:
        zz = _embed(SIGMA_Z, j, n) @ _embed(SIGMA_Z, k, n)
        # (ZZ)^2 = 1, so exp(-i s ZZ) = cos s - i sin s ZZ
        u_ising = (math.cos(s) * np.eye(dim) - 1j * math.sin(s) * zz) @ u_ising
    u_kick = np.eye(dim, dtype=np.complex128)
    for q in range(n):
        u_kick = _embed(model.kick_gates[q], q, n) @ u_kick
    return u_kick @ u_ising


def haar_random_state(n_qubits: int, rng: np.random.Generator) -> StateVector:
    """Haar-distributed pure state: i.i.d. complex Gaussians, normalised."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    dim = 1 << n_qubits
    z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return StateVector(z / np.linalg.norm(z))


def product_state(parts) -> StateVector:
    """Tensor product with ``parts[0]`` on the lowest qubit indices."""
    parts = list(parts)
    if not parts:
        raise ValueError("product_state needs at least one part")
    amps = np.array([1.0 + 0j])
    for part in parts:
        v = part.amplitudes if isinstance(part, StateVector) else np.asarray(part)
        # np.kron puts its second argument on the low-order index
        amps = np.kron(v, amps)
    return StateVector(amps)


def basis_state(bits: str) -> StateVector:
    """Computational basis state; ``bits[j]`` is the value of qubit ``j``."""
    index = sum(int(b) << j for j, b in enumerate(bits))
    amps = np.zeros(1 << len(bits), dtype=np.complex128)
    amps[index] = 1.0
    return StateVector(amps)


def plus_state() -> StateVector:
    """+1 eigenstate of sigma_x."""
    return StateVector(np.array([1.0, 1.0]) / math.sqrt(2.0))


def bell_phi_plus() -> StateVector:
    """(|00> + |11>)/sqrt(2)."""
    return StateVector(np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2.0))
