"""Control functions u(t) built from squared-gap profiles.

A locally adiabatic schedule slows down where the gap is small::

    du/dt = -eps * gap_sq(u),   u(0) = 1,
    T     = (1/eps) * integral_0^1 du / gap_sq(u).

Besides the per-instance schedule this module builds the generic "mean"
schedule from the squared gap averaged over problem instances, the linear
reference schedule, and time-dilated variants.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ising_map import build_ising
from .signal_model import ChannelModel, CodeBook, assemble_signal, sample_instance
from .spectral import (
    GapProfile,
    build_problem_diagonal,
    default_grid,
    gap_sq_on_grid,
    merge_grid,
    refinement_points,
)

log = logging.getLogger(__name__)

DEFAULT_EPS = 0.1
U_FLOOR = 1e-6
GAP_FLOOR = 1e-10
MAX_DU = 1e-3
MAX_ODE_STEPS = 10_000_000
MAX_EXACT_MEAN_USERS = 9
DEFAULT_MEAN_GAP_SAMPLES = 2000


class ScheduleError(RuntimeError):
    pass


class ScheduleLabel(str, enum.Enum):
    OPTIMAL = "optimal"
    MEAN = "mean"
    LINEAR = "linear"
    DILATED = "dilated"


@dataclass(frozen=True, eq=False)
class Schedule:
    """Monotone control function sampled at ``times``, linear in between."""

    times: np.ndarray
    values: np.ndarray
    label: ScheduleLabel

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        v = np.array(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or len(t) < 2:
            raise ScheduleError("times and values must be 1-D arrays of equal length >= 2")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ScheduleError("times must increase strictly from 0")
        if v[0] != 1.0 or np.any(np.diff(v) >= 0):
            raise ScheduleError("values must start at 1 and decrease strictly")
        if v[-1] > U_FLOOR or v[-1] < 0.0:
            raise ScheduleError(f"final control value {v[-1]} is not in [0, {U_FLOOR}]")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "label", ScheduleLabel(self.label))

    @property
    def annealing_time(self) -> float:
        return float(self.times[-1])

    def __call__(self, t):
        return np.interp(t, self.times, self.values)


def _check_profile(profile: GapProfile) -> None:
    bad = np.flatnonzero(profile.gap_sq < GAP_FLOOR)
    if bad.size:
        k = bad[0]
        raise ScheduleError(
            f"squared gap {profile.gap_sq[k]:.3e} below floor {GAP_FLOOR:g} at u={profile.u_grid[k]:.6g}; "
            "annealing time would diverge"
        )


def annealing_time(profile: GapProfile, eps: float = DEFAULT_EPS) -> float:
    """``(1/eps) * integral du / gap_sq(u)`` with ``gap_sq`` linearly interpolated.

    Each grid segment is integrated in closed form, ``h * log(b/a) / (b - a)``,
    so the result is the exact duration of the schedule ODE for this profile.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    _check_profile(profile)
    h = np.diff(profile.u_grid)
    a, b = profile.gap_sq[:-1], profile.gap_sq[1:]
    r = (b - a) / a
    small = np.abs(r) < 1e-6
    r_safe = np.where(small, 1.0, r)
    ratio = np.where(small, 1.0 - r / 2.0 + r * r / 3.0, np.log1p(r_safe) / r_safe)
    return float(np.sum(h / a * ratio) / eps)


def optimal_schedule(
    profile: GapProfile,
    eps: float = DEFAULT_EPS,
    max_du: float = MAX_DU,
    label: ScheduleLabel = ScheduleLabel.OPTIMAL,
) -> Schedule:
    """Integrate ``du/dt = -eps * gap_sq(u)`` from ``u = 1`` with classical RK4.

    Each step is sized so that the control value moves by about ``max_du``;
    the squared gap is read from the profile's linear interpolation. The last
    step is shortened to land on ``u = 0``.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    _check_profile(profile)

    def rate(u):
        return -eps * float(np.interp(u, profile.u_grid, profile.gap_sq))

    t, u = 0.0, 1.0
    times, values = [t], [u]
    while u > U_FLOOR:
        if len(times) > MAX_ODE_STEPS:
            raise ScheduleError(f"ODE step budget exhausted at t={t:.6g}, u={u:.3e}")
        k1 = rate(u)
        dt = max_du / -k1
        if not np.isfinite(dt) or t + dt == t:
            raise ScheduleError(f"step size underflow at t={t:.6g}, u={u:.3e}")
        k2 = rate(u + 0.5 * dt * k1)
        k3 = rate(u + 0.5 * dt * k2)
        k4 = rate(u + dt * k3)
        u_next = u + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if u_next <= U_FLOOR:
            if u_next < 0:
                dt *= u / (u - u_next)
            u_next = 0.0
        t += dt
        u = u_next
        times.append(t)
        values.append(u)
    return Schedule(np.array(times), np.array(values), label)


def linear_schedule(T: float, n_points: int = 101) -> Schedule:
    if T <= 0:
        raise ValueError(f"annealing time must be > 0, got {T}")
    times = np.linspace(0.0, T, n_points)
    values = 1.0 - times / T
    values[-1] = 0.0
    return Schedule(times, values, ScheduleLabel.LINEAR)


def dilate(schedule: Schedule, lam: float) -> Schedule:
    """Time-dilated copy ``u_lam(t) = u(t / lam)`` over ``[0, lam * T]``."""
    if lam < 1:
        raise ValueError(f"dilation factor must be >= 1, got {lam}")
    if lam == 1:
        return schedule
    return Schedule(schedule.times * lam, schedule.values, ScheduleLabel.DILATED)


def _mean_profile(diagonals: list[np.ndarray], n: int, u_grid, refine: bool) -> GapProfile:
    g = np.mean([gap_sq_on_grid(d, n, u_grid) for d in diagonals], axis=0)
    if refine:
        extra = refinement_points(u_grid, g)
        g_extra = np.mean([gap_sq_on_grid(d, n, extra) for d in diagonals], axis=0)
        u_grid, g = merge_grid(u_grid, g, extra, g_extra)
    return GapProfile(u_grid, g)


def mean_gap_exact(codebook: CodeBook, u_grid=None, refine: bool = True) -> GapProfile:
    """Average squared gap over all ``2^N`` activity patterns (perfect channel, no noise)."""
    n = codebook.n_users
    if n > MAX_EXACT_MEAN_USERS:
        raise ValueError(f"exact mean gap limited to N <= {MAX_EXACT_MEAN_USERS}, got {n}")
    u_grid = default_grid() if u_grid is None else np.asarray(u_grid, dtype=float)
    w = np.ones(n)
    diagonals = []
    for k in range(2**n):
        pattern = (k >> np.arange(n)) & 1
        y = assemble_signal(codebook, pattern, w, np.zeros(codebook.code_length))
        diagonals.append(build_problem_diagonal(build_ising(codebook, y, w)))
    return _mean_profile(diagonals, n, u_grid, refine)


def mean_gap_sampled(
    codebook: CodeBook,
    u_grid=None,
    n_samples: int = DEFAULT_MEAN_GAP_SAMPLES,
    rng: np.random.Generator | None = None,
    channel: ChannelModel = ChannelModel.RAYLEIGH,
    refine: bool = True,
) -> GapProfile:
    """Monte Carlo mean of the squared gap over noiseless draws of ``(b0, w)``."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng() if rng is None else rng
    u_grid = default_grid() if u_grid is None else np.asarray(u_grid, dtype=float)
    diagonals = []
    for _ in range(n_samples):
        inst = sample_instance(codebook, channel, 0.0, rng)
        model = build_ising(codebook, inst.received, inst.channel)
        diagonals.append(build_problem_diagonal(model))
    return _mean_profile(diagonals, codebook.n_users, u_grid, refine)


def profile_cache_key(codebook: CodeBook, channel, u_grid, refine: bool, n_samples, seed) -> str:
    u_grid = default_grid() if u_grid is None else np.asarray(u_grid, dtype=float)
    spec = {
        "codebook": codebook.digest(),
        "channel": ChannelModel(channel).value,
        "grid": hashlib.sha256(np.ascontiguousarray(u_grid, dtype="<f8").tobytes()).hexdigest()[:16],
        "refine": bool(refine),
        "n_samples": n_samples,
        "seed": seed,
    }
    return hashlib.sha256(json.dumps(spec, sort_keys=True).encode()).hexdigest()[:24]


def save_profile(profile: GapProfile, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, u_grid=profile.u_grid, gap_sq=profile.gap_sq)
    tmp.replace(path)


def load_profile(path) -> GapProfile:
    with np.load(path) as data:
        return GapProfile(data["u_grid"], data["gap_sq"])


def cached_mean_profile(
    codebook: CodeBook,
    channel: ChannelModel,
    cache_dir=None,
    u_grid=None,
    refine: bool = True,
    n_samples: int = DEFAULT_MEAN_GAP_SAMPLES,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
) -> GapProfile:
    """Exact mean for perfect channels, sampled mean for Rayleigh; optionally cached on disk.

    ``seed`` identifies the sampling stream in the cache key; ``rng`` is the
    generator actually used (defaults to ``default_rng(seed)``).
    """
    channel = ChannelModel(channel)
    exact = channel is ChannelModel.PERFECT
    key = profile_cache_key(
        codebook, channel, u_grid, refine, None if exact else n_samples, None if exact else seed
    )
    path = Path(cache_dir) / f"meangap-{key}.npz" if cache_dir is not None else None
    if path is not None and path.exists():
        log.info("loading cached mean gap %s", path)
        return load_profile(path)
    if exact:
        profile = mean_gap_exact(codebook, u_grid, refine)
    else:
        rng = np.random.default_rng(seed) if rng is None else rng
        profile = mean_gap_sampled(codebook, u_grid, n_samples, rng, channel, refine)
    if path is not None:
        save_profile(profile, path)
    return profile
