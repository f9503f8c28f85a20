import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noma_anneal.ising_map import build_ising
from noma_anneal.scheduler import (
    U_FLOOR,
    Schedule,
    ScheduleError,
    ScheduleLabel,
    annealing_time,
    cached_mean_profile,
    dilate,
    linear_schedule,
    load_profile,
    mean_gap_exact,
    mean_gap_sampled,
    optimal_schedule,
    save_profile,
)
from noma_anneal.signal_model import ChannelModel, CodeBook, builtin_codebook, sample_instance
from noma_anneal.spectral import GapProfile, default_grid, gap_profile


def constant_profile(c, n=9):
    u = np.linspace(0, 1, n)
    return GapProfile(u, np.full(n, float(c)))


@pytest.mark.parametrize("c,eps,T", [(4.0, 0.1, 2.5), (1.0, 1.0, 1.0)])
def test_annealing_time_constant_gap(c, eps, T):
    assert annealing_time(constant_profile(c), eps) == pytest.approx(T, rel=1e-12)


def test_annealing_time_rejects_closed_gap():
    prof = GapProfile([0.0, 0.5, 1.0], [0.0, 1.0, 4.0])
    with pytest.raises(ScheduleError, match="u=0"):
        annealing_time(prof)
    with pytest.raises(ScheduleError):
        optimal_schedule(prof)


def test_annealing_time_matches_quadrature_of_closed_form():
    # integral of 1/(1 + 3u^2) over [0, 1] is arctan(sqrt 3)/sqrt 3 = pi/(3 sqrt 3)
    u = np.linspace(0, 1, 2001)
    T = annealing_time(GapProfile(u, 1 + 3 * u**2), eps=0.5)
    assert T == pytest.approx(2 * np.pi / (3 * np.sqrt(3)), rel=1e-6)


def test_constant_gap_recovers_linear():
    eps, c = 0.1, 4.0
    sched = optimal_schedule(constant_profile(c), eps)
    T = 1 / (eps * c)
    assert sched.annealing_time == pytest.approx(T, rel=1e-9)
    lin = linear_schedule(T)
    np.testing.assert_allclose(sched.values, lin(sched.times), atol=1e-9)
    np.testing.assert_allclose(sched.values, 1 - eps * c * sched.times, atol=1e-9)


def test_optimal_schedule_ode_residual(lone_user_model):
    prof = gap_profile(lone_user_model)
    eps = 0.1
    s = optimal_schedule(prof, eps)
    assert s.values[0] == 1.0 and s.values[-1] == 0.0
    assert np.all(np.diff(s.values) < 0)
    # centred differences at interior nodes vs the ODE right-hand side
    t, u = s.times, s.values
    slope = (u[2:] - u[:-2]) / (t[2:] - t[:-2])
    rhs = -eps * prof(u[1:-1])
    np.testing.assert_allclose(slope[:-1], rhs[:-1], rtol=2e-2)


def test_ode_and_quadrature_agree(lone_user_model):
    prof = gap_profile(lone_user_model)
    T_ode = optimal_schedule(prof, 0.1).annealing_time
    T_quad = annealing_time(prof, 0.1)
    assert abs(T_ode - T_quad) / T_quad <= 5e-3


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.05, 5.0), min_size=2, max_size=12), st.floats(0.05, 1.0))
def test_random_profiles_monotone_and_consistent(gaps, eps):
    u = np.linspace(0, 1, len(gaps))
    prof = GapProfile(u, gaps)
    s = optimal_schedule(prof, eps)
    assert s.values[0] == 1.0 and s.values[-1] <= U_FLOOR
    assert np.all(np.diff(s.values) < 0)
    assert np.all((s.values >= 0) & (s.values <= 1))
    T = annealing_time(prof, eps)
    assert abs(s.annealing_time - T) / T <= 5e-3


def test_lone_user_schedule_flat_near_gap_minimum(lone_user_model):
    prof = gap_profile(lone_user_model)
    s = optimal_schedule(prof, 0.1)
    t_min = np.interp(-prof.argmin_u, -s.values, s.times)
    speed_at_min = abs(np.interp(t_min, s.times[1:], np.diff(s.values) / np.diff(s.times)))
    speed_at_start = abs((s.values[1] - s.values[0]) / (s.times[1] - s.times[0]))
    assert speed_at_min < 0.1 * speed_at_start


def test_linear_schedule_examples():
    assert linear_schedule(1.0)(0.5) == pytest.approx(0.5)
    s = linear_schedule(2.5)
    assert s(2.5) == 0.0 and s.annealing_time == 2.5
    assert s.label is ScheduleLabel.LINEAR
    with pytest.raises(ValueError):
        linear_schedule(0.0)


def test_dilate():
    s = optimal_schedule(GapProfile([0, 0.3, 1], [2.0, 0.5, 4.0]), 0.1)
    assert dilate(s, 1) is s
    d = dilate(s, 2)
    assert d.label is ScheduleLabel.DILATED
    assert d.annealing_time == pytest.approx(2 * s.annealing_time)
    np.testing.assert_array_equal(d(d.times), s(d.times / 2))
    T = s.annealing_time
    assert d(T) == s(T / 2)
    with pytest.raises(ValueError):
        dilate(s, 0.5)


def test_schedule_invariants_enforced():
    with pytest.raises(ScheduleError):
        Schedule([0, 1, 2], [1.0, 0.5, 0.6], ScheduleLabel.LINEAR)
    with pytest.raises(ScheduleError):
        Schedule([0, 1], [1.0, 0.2], ScheduleLabel.LINEAR)
    with pytest.raises(ScheduleError):
        Schedule([0, 1], [0.9, 0.0], ScheduleLabel.LINEAR)


def test_mean_gap_exact_single_user():
    cb = CodeBook(np.array([[1]]))
    u = default_grid(11)
    prof = mean_gap_exact(cb, u, refine=False)
    # both patterns give h = +-1/2, so gap_sq = 4((1-u)^2/4 + u^2)
    np.testing.assert_allclose(prof.gap_sq, (1 - u) ** 2 + 4 * u**2, atol=1e-12)


def test_mean_gap_exact_is_pattern_average():
    cb = builtin_codebook(6)
    u = default_grid(9)
    prof = mean_gap_exact(cb, u, refine=False)
    total = np.zeros(len(u))
    for k in range(64):
        b = (k >> np.arange(6)) & 1
        model = build_ising(cb, cb.matrix @ b, np.ones(6))
        total += gap_profile(model, u, refine=False).gap_sq
    np.testing.assert_allclose(prof.gap_sq, total / 64, rtol=1e-12)
    assert prof.gap_sq[-1] == pytest.approx(4.0, abs=1e-9)
    assert np.all(prof.gap_sq[1:] > 0)


def test_mean_gap_exact_n8_shape(c8):
    prof = mean_gap_exact(c8, default_grid(33), refine=False)
    k = int(np.argmin(prof.gap_sq))
    assert 0 < k < 32
    assert prof.gap_sq[-1] == pytest.approx(4.0, abs=1e-9)


def test_mean_gap_sampled_single_sample_equals_instance():
    cb = builtin_codebook(6)
    u = default_grid(9)
    prof = mean_gap_sampled(cb, u, 1, np.random.default_rng(3), refine=False)
    inst = sample_instance(cb, ChannelModel.RAYLEIGH, 0.0, np.random.default_rng(3))
    single = gap_profile(build_ising(cb, inst.received, inst.channel), u, refine=False)
    np.testing.assert_allclose(prof.gap_sq, single.gap_sq, rtol=1e-12)
    assert prof.gap_sq[-1] == pytest.approx(4.0, abs=1e-9)


def test_mean_gap_sampled_validates():
    with pytest.raises(ValueError):
        mean_gap_sampled(builtin_codebook(6), n_samples=0)


def test_profile_cache_roundtrip(tmp_path):
    cb = builtin_codebook(6)
    u = default_grid(9)
    a = cached_mean_profile(cb, "rayleigh", tmp_path, u, refine=False, n_samples=3, seed=5)
    files = list(tmp_path.glob("meangap-*.npz"))
    assert len(files) == 1
    b = cached_mean_profile(cb, "rayleigh", tmp_path, u, refine=False, n_samples=3, seed=5)
    np.testing.assert_array_equal(a.gap_sq, b.gap_sq)
    c = cached_mean_profile(cb, "rayleigh", tmp_path, u, refine=False, n_samples=3, seed=6)
    assert len(list(tmp_path.glob("meangap-*.npz"))) == 2
    assert not np.array_equal(a.gap_sq, c.gap_sq)
    save_profile(a, tmp_path / "x.npz")
    np.testing.assert_array_equal(load_profile(tmp_path / "x.npz").u_grid, a.u_grid)


def test_annealing_time_exact_for_linear_segment():
    # gap_sq(u) = 1 - u/2 on one segment: integral of 1/gap_sq = 2 ln 2
    assert annealing_time(GapProfile([0.0, 1.0], [1.0, 0.5]), 1.0) == pytest.approx(2 * np.log(2), rel=1e-12)
