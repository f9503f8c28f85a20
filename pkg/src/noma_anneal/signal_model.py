"""Codebooks, channel draws and received-signal synthesis for the NOMA uplink.

A user ``i`` owns a bipolar code ``c_i`` of length ``M`` with entries
``+-1/sqrt(M)`` (unit power). Active users superpose their faded codes at the
receiver and thermal noise is added::

    y = sum_i w_i * b_i * c_i + n,    n ~ N(0, xi^2 I_M)
"""

from __future__ import annotations

import enum
import hashlib
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAX_DECODABILITY_USERS = 12
DEFAULT_RETRY_BUDGET = 10_000

# Sign patterns of the reference codes for N = 6..9, one row per chip,
# one column per user. Scaled by 1/sqrt(M) on load.
_BUILTIN_SIGNS: dict[int, list[list[int]]] = {
    6: [
        [-1, -1, 1, 1, -1, -1],
        [1, 1, -1, 1, 1, -1],
        [-1, -1, 1, 1, 1, 1],
        [1, -1, 1, 1, -1, -1],
        [-1, 1, 1, 1, -1, 1],
    ],
    7: [
        [1, 1, 1, 1, -1, -1, -1],
        [1, 1, 1, 1, 1, -1, 1],
        [1, -1, -1, 1, -1, 1, 1],
        [-1, 1, 1, 1, 1, -1, -1],
        [1, 1, 1, -1, -1, 1, -1],
        [-1, -1, 1, -1, -1, -1, 1],
    ],
    8: [
        [1, 1, -1, 1, 1, -1, 1, -1],
        [1, -1, -1, -1, 1, -1, 1, 1],
        [-1, 1, 1, -1, 1, -1, -1, 1],
        [1, 1, -1, -1, 1, 1, -1, -1],
        [1, 1, -1, 1, 1, 1, -1, 1],
        [-1, 1, -1, 1, -1, -1, -1, -1],
    ],
    9: [
        [-1, -1, -1, -1, -1, -1, -1, -1, -1],
        [-1, -1, 1, -1, -1, -1, 1, -1, 1],
        [-1, -1, -1, 1, -1, 1, -1, -1, 1],
        [-1, 1, 1, -1, 1, -1, -1, 1, -1],
        [-1, -1, 1, 1, 1, -1, 1, -1, 1],
        [-1, 1, 1, 1, 1, 1, 1, 1, 1],
        [-1, -1, 1, -1, -1, 1, 1, 1, 1],
    ],
}

SUPPORTED_BUILTIN_SIZES = tuple(sorted(_BUILTIN_SIGNS))


class CodebookError(ValueError):
    """Raised for malformed, unsupported or undecodable codebooks."""


class ChannelModel(str, enum.Enum):
    PERFECT = "perfect"
    RAYLEIGH = "rayleigh"


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class CodeBook:
    """Bipolar identification sequences, stored as an integer ``(M, N)`` sign matrix."""

    signs: np.ndarray

    def __post_init__(self):
        signs = np.array(self.signs, dtype=np.int64)
        if signs.ndim != 2 or signs.size == 0:
            raise CodebookError(f"sign matrix must be a non-empty 2-D array, got shape {signs.shape}")
        if not np.all(np.abs(signs) == 1):
            raise CodebookError("sign matrix entries must be +1 or -1")
        object.__setattr__(self, "signs", _frozen(signs))
        object.__setattr__(self, "matrix", _frozen(signs / np.sqrt(signs.shape[0])))

    @property
    def n_users(self) -> int:
        return self.signs.shape[1]

    @property
    def code_length(self) -> int:
        return self.signs.shape[0]

    def column(self, i: int) -> np.ndarray:
        return self.matrix[:, i]

    def digest(self) -> str:
        """Short content hash, stable across platforms."""
        h = hashlib.sha256(f"{self.code_length} {self.n_users}\n".encode())
        h.update(self.signs.astype("<i1").tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """One draw of activity pattern, fading coefficients and noise, with the received signal."""

    activity_pattern: np.ndarray
    channel: np.ndarray
    noise: np.ndarray
    noise_std: float
    received: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "activity_pattern", _frozen(np.asarray(self.activity_pattern, dtype=np.int64)))
        for name in ("channel", "noise", "received"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=float)))

    @property
    def n_users(self) -> int:
        return self.activity_pattern.shape[0]


def builtin_codebook(n_users: int) -> CodeBook:
    if n_users not in _BUILTIN_SIGNS:
        raise CodebookError(
            f"unsupported builtin size {n_users}; supported sizes are {list(SUPPORTED_BUILTIN_SIZES)}"
        )
    return CodeBook(np.array(_BUILTIN_SIGNS[n_users]))


def _ternary_candidates(n: int) -> np.ndarray:
    # Only candidates whose first nonzero entry is +1: lambda and -lambda are equivalent.
    cands = np.array(list(itertools.product((-1, 0, 1), repeat=n)), dtype=np.int64)
    nz = cands != 0
    first = cands[np.arange(len(cands)), np.argmax(nz, axis=1)]
    return cands[first == 1]


def check_decodability(codebook: CodeBook) -> bool:
    """Exhaustively test that no nonzero ``lambda`` in {-1,0,1}^N gives ``sum lambda_i c_i = 0``.

    Works on the integer sign matrix, so the test is exact.
    """
    n = codebook.n_users
    if n > MAX_DECODABILITY_USERS:
        raise CodebookError(f"exhaustive check limited to {MAX_DECODABILITY_USERS} users, got {n}")
    combos = _ternary_candidates(n) @ codebook.signs.T
    return not bool(np.any(np.all(combos == 0, axis=1)))


def _has_parallel_columns(signs: np.ndarray) -> bool:
    # c_i = +-c_j is the cheapest and most frequent dependency.
    gram = signs.T @ signs
    np.fill_diagonal(gram, 0)
    return bool(np.any(np.abs(gram) == signs.shape[0]))


def generate_codebook(
    n_users: int,
    code_length: int,
    rng: np.random.Generator,
    max_draws: int = DEFAULT_RETRY_BUDGET,
) -> CodeBook:
    """Draw uniform random bipolar codes until a decodable set is found."""
    if not 1 <= n_users <= MAX_DECODABILITY_USERS:
        raise CodebookError(f"n_users must be in [1, {MAX_DECODABILITY_USERS}], got {n_users}")
    if code_length < 1:
        raise CodebookError(f"code_length must be >= 1, got {code_length}")
    for _ in range(max_draws):
        signs = 2 * rng.integers(0, 2, size=(code_length, n_users)) - 1
        if n_users > 1 and _has_parallel_columns(signs):
            continue
        cb = CodeBook(signs)
        if check_decodability(cb):
            return cb
    raise CodebookError(
        f"no decodable codebook for N={n_users}, M={code_length} after {max_draws} draws; "
        "try a larger code length M"
    )


def snr_to_noise_std(snr_db: float) -> float:
    return 10.0 ** (-snr_db / 20.0)


def noise_std_to_snr(noise_std: float) -> float:
    return -20.0 * np.log10(noise_std)


def assemble_signal(codebook: CodeBook, pattern, channel, noise) -> np.ndarray:
    pattern = np.asarray(pattern, dtype=float)
    channel = np.asarray(channel, dtype=float)
    noise = np.asarray(noise, dtype=float)
    n, m = codebook.n_users, codebook.code_length
    if pattern.shape != (n,) or channel.shape != (n,) or noise.shape != (m,):
        raise ValueError(
            f"dimension mismatch: expected pattern ({n},), channel ({n},), noise ({m},); "
            f"got {pattern.shape}, {channel.shape}, {noise.shape}"
        )
    return codebook.matrix @ (channel * pattern) + noise


def draw_channel(kind: ChannelModel, n_users: int, rng: np.random.Generator) -> np.ndarray:
    if ChannelModel(kind) is ChannelModel.PERFECT:
        return np.ones(n_users)
    return rng.standard_normal(n_users)


def sample_instance(
    codebook: CodeBook,
    channel: ChannelModel,
    noise_std: float,
    rng: np.random.Generator,
) -> ProblemInstance:
    """Draw ``(b0, w, n)`` and assemble the received signal.

    The noise draw is always consumed, so a given RNG state yields the same
    activity pattern and fading at every SNR; with ``noise_std == 0`` the noise
    vector is exactly zero.
    """
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    n, m = codebook.n_users, codebook.code_length
    pattern = rng.integers(0, 2, size=n)
    w = draw_channel(channel, n, rng)
    z = rng.standard_normal(m)
    noise = noise_std * z if noise_std > 0 else np.zeros(m)
    y = assemble_signal(codebook, pattern, w, noise)
    return ProblemInstance(pattern, w, noise, float(noise_std), y)


def read_codebook(path) -> CodeBook:
    """Parse the text format: ``N M`` header, then M rows of N signs."""
    path = Path(path)
    lines = [ln.split() for ln in path.read_text().splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 2:
        raise CodebookError(f"{path}: first line must be 'N M'")
    n, m = (int(v) for v in lines[0])
    rows = lines[1:]
    if len(rows) != m or any(len(r) != n for r in rows):
        raise CodebookError(f"{path}: expected {m} rows of {n} signs")
    return CodeBook(np.array([[int(float(v)) for v in r] for r in rows]))


def write_codebook(codebook: CodeBook, path) -> None:
    rows = [f"{codebook.n_users} {codebook.code_length}"]
    rows += [" ".join(f"{s:+d}" for s in row) for row in codebook.signs]
    Path(path).write_text("\n".join(rows) + "\n")
