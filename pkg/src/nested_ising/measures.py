"""
Reduced states and the observables computed from them: purity, two-qubit
concurrence, sigma_z expectation, and the Werner / phase-damping reference
curves of the concurrence-purity plane.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .engine import SIGMA_Y, StateVector
from .errors import DimensionMismatch, NumericalFailure, WrongDimension

SIGMA_YY = np.kron(SIGMA_Y, SIGMA_Y)
PHI_PLUS = np.array([1.0, 0.0, 0.0, 1.0], dtype=np.complex128) / np.sqrt(2.0)
PHI_PLUS_DM = np.outer(PHI_PLUS, PHI_PLUS.conj())
_EIG_FLOOR = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class CPPoint:
    purity: float
    concurrence: float
    time: float = 0


def reduced_density(state: StateVector | np.ndarray, n_central: int) -> np.ndarray:
    """Trace out every qubit except the ``n_central`` lowest ones.

    ``rho[a, b] = sum_E psi[a + 2**n_c E] conj(psi[b + 2**n_c E])``.
    """
    psi = state.amplitudes if isinstance(state, StateVector) else np.asarray(state)
    if n_central not in (1, 2):
        raise DimensionMismatch(f"n_central must be 1 or 2, got {n_central}")
    d = 1 << n_central
    if psi.size < d or psi.size % d:
        raise DimensionMismatch(
            f"state of length {psi.size} has fewer than {n_central} qubits"
        )
    m = psi.reshape(-1, d)
    rho = m.T @ m.conj()
    return rho


def _check_dm(rho, dims):
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] not in dims:
        raise WrongDimension(f"expected a density matrix of size {dims}, got shape {rho.shape}")
    return rho


def purity(rho) -> float:
    """tr(rho^2) computed as the sum of squared moduli (rho is Hermitian)."""
    rho = _check_dm(rho, (2, 4))
    return float(np.sum(np.abs(rho) ** 2))


def spin_flip(rho) -> np.ndarray:
    """(sigma_y x sigma_y) rho* (sigma_y x sigma_y) in the computational basis."""
    rho = _check_dm(rho, (4,))
    return SIGMA_YY @ rho.conj() @ SIGMA_YY


def concurrence(rho) -> float:
    """Wootters concurrence of a two-qubit density matrix.

    Eigenvalues of the non-Hermitian product ``rho @ spin_flip(rho)`` come
    from a general eigensolver; they are real and non-negative in exact
    arithmetic, so small imaginary parts and tiny negative values are
    rounding and get discarded.
    """
    rho = _check_dm(rho, (4,))
    ev = np.linalg.eigvals(rho @ spin_flip(rho))
    if np.max(np.abs(ev.imag)) > 1e-8:
        raise NumericalFailure(f"rho rho~ has complex eigenvalues {ev}")
    re = ev.real
    if np.min(re) < -1e-6:
        raise NumericalFailure(f"rho rho~ has negative eigenvalue {np.min(re):.3e}")
    # eigenvalues below the solver's rounding floor are zero; left alone, a
    # 1e-17 residue becomes 3e-9 after the square root
    floor = _EIG_FLOOR * max(np.max(np.abs(ev)), 1e-300)
    re = np.where(re < floor, 0.0, re)
    lam = np.sqrt(np.sort(re)[::-1])
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def pure_state_concurrence(psi) -> float:
    """2|ad - bc| for a pure two-qubit state (a, b, c, d)."""
    a, b, c, d = np.asarray(psi, dtype=np.complex128).ravel()
    return float(2.0 * abs(a * d - b * c))


def sigma_z_expectation(rho) -> float:
    rho = _check_dm(rho, (2,))
    return float((rho[0, 0] - rho[1, 1]).real)


def werner_state(p: float) -> np.ndarray:
    return p * PHI_PLUS_DM + (1.0 - p) * np.eye(4) / 4.0


def dephased_bell_state(kappa: float) -> np.ndarray:
    rho = PHI_PLUS_DM.copy()
    rho[0, 3] *= kappa
    rho[3, 0] *= kappa
    return rho


def _curve(family, n_samples):
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    out = []
    for x in np.linspace(0.0, 1.0, n_samples):
        rho = family(x)
        out.append(CPPoint(purity(rho), concurrence(rho), float(x)))
    return out


def werner_curve(n_samples: int = 201) -> list[CPPoint]:
    """(P, C) along p*|Phi+><Phi+| + (1-p)/4, p uniform on [0, 1].

    The ``time`` slot of each point holds the family parameter ``p``.
    """
    return _curve(werner_state, n_samples)


def dephasing_curve(n_samples: int = 201) -> list[CPPoint]:
    """(P, C) for Bell states with coherences scaled by kappa in [0, 1]."""
    return _curve(dephased_bell_state, n_samples)


@lru_cache(maxsize=8)
def _curve_arrays(kind: str, n_samples: int) -> tuple[np.ndarray, np.ndarray]:
    points = werner_curve(n_samples) if kind == "werner" else dephasing_curve(n_samples)
    ps = np.array([pt.purity for pt in points])
    cs = np.array([pt.concurrence for pt in points])
    order = np.argsort(ps)
    return ps[order], cs[order]


def unital_region_mask(purities, concurrences, tol: float = 0.02,
                       n_samples: int = 2001) -> np.ndarray:
    """True where (P, C) lies between the phase-damping (lower) and Werner
    (upper) curves, each widened by ``tol`` in C at matched P.

    Below the purity range of the phase-damping curve (P < 1/2) its lower
    bound is C = 0.
    """
    p = np.asarray(purities, dtype=float)
    c = np.asarray(concurrences, dtype=float)
    wp, wc = _curve_arrays("werner", n_samples)
    dp, dc = _curve_arrays("dephasing", n_samples)
    upper = np.interp(p, wp, wc, left=0.0, right=wc[-1])
    lower = np.interp(p, dp, dc, left=0.0, right=dc[-1])
    return (c <= upper + tol) & (c >= lower - tol)
