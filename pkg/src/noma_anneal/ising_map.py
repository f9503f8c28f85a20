"""MAP detection as a QUBO, its Ising form, and the exhaustive MAP oracle.

Bits and spins are related by ``sigma_i = 1 - 2 b_i``: an inactive user is
spin up (+1), an active one spin down (-1). Up to an additive constant,

    ||y - C diag(w) b||^2  ==  -sum_i h_i s_i - sum_{i<j} J_ij s_i s_j

with ``h_i = -w_i c_i . y~``, ``J_ij = -w_i w_j (c_i . c_j) / 2`` and
``y~ = y - (1/2) sum_j w_j c_j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_model import CodeBook

MAX_BRUTE_FORCE_USERS = 24
TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class IsingModel:
    local_fields: np.ndarray
    couplings: np.ndarray  # strictly upper triangular

    def __post_init__(self):
        h = np.array(self.local_fields, dtype=float)
        J = np.array(self.couplings, dtype=float)
        n = h.shape[0]
        if h.ndim != 1 or J.shape != (n, n):
            raise ValueError(f"couplings must be ({n}, {n}) for {n} spins, got {J.shape}")
        J = np.triu(J, 1)
        h.flags.writeable = False
        J.flags.writeable = False
        object.__setattr__(self, "local_fields", h)
        object.__setattr__(self, "couplings", J)

    @property
    def n_spins(self) -> int:
        return self.local_fields.shape[0]

    def coupling(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        return float(self.couplings[min(i, j), max(i, j)])


def spins_from_bits(bits) -> np.ndarray:
    return 1 - 2 * np.asarray(bits, dtype=np.int64)


def bits_from_spins(spins) -> np.ndarray:
    return (1 - np.asarray(spins, dtype=np.int64)) // 2


def _check_dims(codebook: CodeBook, y, w):
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.shape != (codebook.code_length,) or w.shape != (codebook.n_users,):
        raise ValueError(
            f"dimension mismatch: y {y.shape} vs M={codebook.code_length}, "
            f"w {w.shape} vs N={codebook.n_users}"
        )
    return y, w


def qubo_objective(codebook: CodeBook, y, w, bits) -> float:
    y, w = _check_dims(codebook, y, w)
    bits = np.asarray(bits, dtype=float)
    if bits.shape != (codebook.n_users,):
        raise ValueError(f"bit-string length {bits.shape} does not match N={codebook.n_users}")
    r = y - codebook.matrix @ (w * bits)
    return float(r @ r)


def build_ising(codebook: CodeBook, y, w) -> IsingModel:
    y, w = _check_dims(codebook, y, w)
    C = codebook.matrix
    y_shift = y - 0.5 * (C @ w)
    h = -w * (C.T @ y_shift)
    J = -0.5 * np.outer(w, w) * (C.T @ C)
    return IsingModel(h, np.triu(J, 1))


def ising_energy(model: IsingModel, spins) -> float:
    s = np.asarray(spins, dtype=float)
    if s.shape != (model.n_spins,):
        raise ValueError(f"spin config length {s.shape} does not match {model.n_spins} spins")
    return float(-model.local_fields @ s - s @ model.couplings @ s)


def all_bitstrings(n: int) -> np.ndarray:
    """All of {0,1}^n as rows, in lexicographic order (b_0 most significant)."""
    k = np.arange(2**n)
    return (k[:, None] >> np.arange(n - 1, -1, -1)) & 1


def brute_force_map(codebook: CodeBook, y, w, tie_tol: float = TIE_TOL) -> np.ndarray:
    """Exhaustive MAP estimate.

    Objectives within ``tie_tol`` of the minimum count as ties; the
    lexicographically smallest tied bit-string wins.
    """
    y, w = _check_dims(codebook, y, w)
    n = codebook.n_users
    if n > MAX_BRUTE_FORCE_USERS:
        raise ValueError(f"brute force limited to {MAX_BRUTE_FORCE_USERS} users, got {n}")
    shifts = np.arange(n - 1, -1, -1)
    chunk = 1 << 16

    def costs():
        for start in range(0, 2**n, chunk):
            bits = (np.arange(start, min(start + chunk, 2**n))[:, None] >> shifts) & 1
            residual = y[None, :] - (bits * w) @ codebook.matrix.T
            yield bits, np.einsum("km,km->k", residual, residual)

    best = min(float(c.min()) for _, c in costs())
    # Chunks come in lexicographic order, so the first tied row is the smallest.
    for bits, c in costs():
        hit = np.flatnonzero(c <= best + tie_tol)
        if hit.size:
            return bits[hit[0]]
    raise AssertionError("unreachable")
