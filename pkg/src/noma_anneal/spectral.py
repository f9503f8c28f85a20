"""Exact diagonalization of the annealing Hamiltonian ``H(u) = (1-u) H_P + u H_C``.

Basis convention: computational basis state ``k`` has bit ``i`` of ``k`` equal
to ``b_i``, so bit 0 means spin ``i`` is up (+1, inactive user) and bit 1 means
spin down (-1, active user). ``H_P`` is diagonal in this basis; the transverse
field ``H_C = -sum_i X_i`` couples each state to its ``N`` single-bit-flip
neighbours with matrix element -1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .ising_map import IsingModel

MAX_DENSE_SPINS = 12
TOL_DEGENERACY = 1e-9
DEFAULT_GRID_POINTS = 129
DEFAULT_REFINE_POINTS = 32


class EigensolverError(RuntimeError):
    def __init__(self, u: float, cause: Exception | str):
        super().__init__(f"eigensolver failed at u={u!r}: {cause}")
        self.u = u


def _check_size(n: int) -> None:
    if n > MAX_DENSE_SPINS:
        raise ValueError(f"dense 2^N storage limited to N <= {MAX_DENSE_SPINS}, got N={n}")


def spin_table(n: int) -> np.ndarray:
    """``(2^n, n)`` array of spins; row ``k`` is the configuration encoded by index ``k``."""
    k = np.arange(2**n)
    return 1 - 2 * ((k[:, None] >> np.arange(n)) & 1)


def bits_to_index(bits) -> int:
    bits = np.asarray(bits, dtype=np.int64)
    return int(bits @ (1 << np.arange(bits.shape[0])))


def index_to_bits(index: int, n: int) -> np.ndarray:
    return (int(index) >> np.arange(n)) & 1


def build_problem_diagonal(model: IsingModel) -> np.ndarray:
    """Ising energies of all ``2^N`` basis states (the diagonal of ``H_P``)."""
    _check_size(model.n_spins)
    s = spin_table(model.n_spins).astype(float)
    return -(s @ model.local_fields) - np.einsum("ki,ij,kj->k", s, model.couplings, s)


@lru_cache(maxsize=16)
def _flip_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(2**n)
    rows = np.repeat(k, n)
    cols = (k[:, None] ^ (1 << np.arange(n))).ravel()
    rows.flags.writeable = False
    cols.flags.writeable = False
    return rows, cols


def _dense_hamiltonian(diagonal: np.ndarray, n: int, u: float) -> np.ndarray:
    dim = diagonal.shape[0]
    H = np.zeros((dim, dim))
    rows, cols = _flip_pairs(n)
    H[rows, cols] = -u
    H[np.diag_indices(dim)] = (1.0 - u) * diagonal
    return H


def _check_u(u: float) -> float:
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"control value u must lie in [0, 1], got {u}")
    return u


def hamiltonian_at(model: IsingModel, u: float) -> np.ndarray:
    u = _check_u(u)
    return _dense_hamiltonian(build_problem_diagonal(model), model.n_spins, u)


def _lowest_levels(diagonal: np.ndarray, n: int, u: float, count: int) -> np.ndarray:
    H = _dense_hamiltonian(diagonal, n, u)
    count = min(count, H.shape[0])
    try:
        ev = scipy.linalg.eigh(
            H, eigvals_only=True, subset_by_index=[0, count - 1], overwrite_a=True, check_finite=False
        )
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverError(u, exc) from exc
    if not np.all(np.isfinite(ev)):
        raise EigensolverError(u, "non-finite eigenvalues")
    return np.sort(ev)


def levels_at(model: IsingModel, u: float, count: int = 2) -> np.ndarray:
    """The ``count`` smallest eigenvalues of ``H(u)``, ascending."""
    u = _check_u(u)
    return _lowest_levels(build_problem_diagonal(model), model.n_spins, u, count)


def gap_squared_at(model: IsingModel, u: float) -> float:
    e = levels_at(model, u, 2)
    return float((e[1] - e[0]) ** 2)


def gap_sq_on_grid(diagonal: np.ndarray, n: int, u_grid) -> np.ndarray:
    """Squared gap for a precomputed ``H_P`` diagonal at every grid point."""
    out = np.empty(len(u_grid))
    for k, u in enumerate(u_grid):
        e = _lowest_levels(diagonal, n, float(u), 2)
        out[k] = (e[1] - e[0]) ** 2
    return out


@dataclass(frozen=True, eq=False)
class GapProfile:
    """Squared spectral gap sampled on a grid over ``u``, linearly interpolated."""

    u_grid: np.ndarray
    gap_sq: np.ndarray

    def __post_init__(self):
        u = np.array(self.u_grid, dtype=float)
        g = np.array(self.gap_sq, dtype=float)
        if u.ndim != 1 or u.shape != g.shape or len(u) < 2:
            raise ValueError("u_grid and gap_sq must be 1-D arrays of equal length >= 2")
        if u[0] != 0.0 or u[-1] != 1.0 or np.any(np.diff(u) <= 0):
            raise ValueError("u_grid must be strictly increasing from 0 to 1")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("gap_sq must be finite and non-negative")
        u.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "u_grid", u)
        object.__setattr__(self, "gap_sq", g)

    def __call__(self, u):
        return np.interp(u, self.u_grid, self.gap_sq)

    def __len__(self) -> int:
        return len(self.u_grid)

    @property
    def degenerate(self) -> bool:
        """True if the gap closes (numerically) somewhere on the grid."""
        return bool(np.any(self.gap_sq <= 1e-10))

    @property
    def argmin_u(self) -> float:
        return float(self.u_grid[np.argmin(self.gap_sq)])


def default_grid(n_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_points)


def refinement_points(u_grid, gap_sq, n_extra: int = DEFAULT_REFINE_POINTS) -> np.ndarray:
    """``n_extra`` new points spread inside the bracket around the coarse minimum."""
    u_grid = np.asarray(u_grid, dtype=float)
    k = int(np.argmin(gap_sq))
    lo = u_grid[max(k - 1, 0)]
    hi = u_grid[min(k + 1, len(u_grid) - 1)]
    pts = np.linspace(lo, hi, n_extra + 2)[1:-1]
    return np.setdiff1d(pts, u_grid)


def merge_grid(u_grid, gap_sq, extra_u, extra_gap) -> tuple[np.ndarray, np.ndarray]:
    u = np.concatenate([u_grid, extra_u])
    g = np.concatenate([gap_sq, extra_gap])
    order = np.argsort(u, kind="stable")
    return u[order], g[order]


def gap_profile(model: IsingModel, u_grid=None, refine: bool = True) -> GapProfile:
    """Sample the squared gap of ``model`` on ``u_grid`` (default 129 points).

    With ``refine``, 32 extra points are inserted around the coarse minimum.
    """
    _check_size(model.n_spins)
    u_grid = default_grid() if u_grid is None else np.asarray(u_grid, dtype=float)
    diagonal = build_problem_diagonal(model)
    g = gap_sq_on_grid(diagonal, model.n_spins, u_grid)
    if refine:
        extra = refinement_points(u_grid, g)
        u_grid, g = merge_grid(u_grid, g, extra, gap_sq_on_grid(diagonal, model.n_spins, extra))
    return GapProfile(u_grid, g)


class GroundState(NamedTuple):
    index: int
    energy: float
    degenerate: bool


def ground_indices(diagonal: np.ndarray, tol: float = TOL_DEGENERACY) -> np.ndarray:
    """All basis indices within ``tol`` of the minimum energy."""
    return np.flatnonzero(diagonal <= diagonal.min() + tol)


def lexicographic_key(indices, n: int) -> np.ndarray:
    """Sort key ordering basis indices like bit-strings ``(b_0, ..., b_{n-1})``."""
    indices = np.asarray(indices, dtype=np.int64)
    bits = (indices[:, None] >> np.arange(n)) & 1
    return bits @ (1 << np.arange(n - 1, -1, -1))


def ground_state(model: IsingModel, tol: float = TOL_DEGENERACY) -> GroundState:
    """Minimum-energy basis state of ``H_P``.

    Levels within ``tol`` of the minimum are treated as degenerate; among them
    the lexicographically smallest bit-string is reported, matching the
    tie rule of :func:`~noma_anneal.ising_map.brute_force_map`.
    """
    d = build_problem_diagonal(model)
    ties = ground_indices(d, tol)
    k = int(ties[np.argmin(lexicographic_key(ties, model.n_spins))])
    return GroundState(k, float(d[k]), len(ties) > 1)
