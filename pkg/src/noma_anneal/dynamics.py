"""Closed-system annealing dynamics ``i d/dt psi = H(u(t)) psi`` (hbar = 1).

The Hamiltonian is held constant over short sub-steps (evaluated at the
sub-step midpoint) and each sub-step is propagated by an exactly unitary map:

* ``"split"`` (default): symmetric splitting into the diagonal problem part
  and the transverse field, whose exponential factorizes into single-qubit
  rotations ``cos(u dt) + i sin(u dt) X_q``.
* ``"exact"``: dense eigendecomposition of ``H`` at every sub-step. Slow; kept
  as a cross-check.

Sub-steps satisfy ``||H|| * dt <= max_phase`` with the bound
``||H(u)|| <= max(max|E_k|, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ising_map import IsingModel
from .scheduler import Schedule
from .spectral import MAX_DENSE_SPINS, TOL_DEGENERACY, _dense_hamiltonian, build_problem_diagonal, ground_indices

TOL_NORM = 1e-6
DEFAULT_RECORD_POINTS = 200
DEFAULT_MAX_PHASE = 0.1


class DynamicsError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class EvolutionResult:
    times: np.ndarray
    controls: np.ndarray
    pqa: np.ndarray
    schedule_label: str
    norm_drift: float
    degenerate: bool
    n_steps: int

    @property
    def final_success(self) -> float:
        return float(self.pqa[-1])

    @property
    def annealing_time(self) -> float:
        return float(self.times[-1])


def initial_state(n_spins: int) -> np.ndarray:
    """Uniform superposition ``|+>^N``, the ground state of ``-sum_i X_i``."""
    if not 1 <= n_spins <= MAX_DENSE_SPINS:
        raise ValueError(f"state vectors limited to 1 <= N <= {MAX_DENSE_SPINS}, got {n_spins}")
    dim = 2**n_spins
    return np.full(dim, dim**-0.5, dtype=complex)


def _transverse_rotation(psi: np.ndarray, n: int, angle: float) -> np.ndarray:
    # exp(-i angle * (-sum_q X_q)) applied one qubit at a time.
    c, s = np.cos(angle), 1j * np.sin(angle)
    for q in range(n):
        view = psi.reshape(2 ** (n - 1 - q), 2, 2**q)
        a = view[:, 0, :].copy()
        b = view[:, 1, :]
        view[:, 0, :] = c * a + s * b
        view[:, 1, :] = s * a + c * b
    return psi


def _split_steps(psi, diagonal, n, u_mid, dt):
    for u in u_mid:
        half = np.exp((-0.5j * dt * (1.0 - u)) * diagonal)
        psi *= half
        _transverse_rotation(psi, n, u * dt)
        psi *= half
    return psi


def _exact_steps(psi, diagonal, n, u_mid, dt):
    for u in u_mid:
        evals, evecs = np.linalg.eigh(_dense_hamiltonian(diagonal, n, float(u)))
        psi = evecs @ (np.exp(-1j * dt * evals) * (evecs.T @ psi))
    return psi


_METHODS = {"split": _split_steps, "exact": _exact_steps}


def evolve(
    model: IsingModel,
    schedule: Schedule,
    record_points: int = DEFAULT_RECORD_POINTS,
    max_phase: float = DEFAULT_MAX_PHASE,
    method: str = "split",
    psi0: np.ndarray | None = None,
    tol_degeneracy: float = TOL_DEGENERACY,
) -> EvolutionResult:
    """Anneal from ``|+>^N`` along ``schedule`` and track the ground-state overlap.

    ``pqa[k]`` is the probability weight on the ground space of ``H_P`` (a single
    state unless levels lie within ``tol_degeneracy``) at ``times[k]``; the
    times are ``record_points`` evenly spaced instants covering ``[0, T]``.
    """
    n = model.n_spins
    if record_points < 2:
        raise ValueError("record_points must be >= 2")
    step = _METHODS[method]
    diagonal = build_problem_diagonal(model)
    targets = ground_indices(diagonal, tol_degeneracy)
    psi = initial_state(n) if psi0 is None else np.array(psi0, dtype=complex)
    if psi.shape != (2**n,):
        raise ValueError(f"initial state must have length {2**n}")

    T = schedule.annealing_time
    h_norm = max(float(np.abs(diagonal).max()), float(n))
    times = np.linspace(0.0, T, record_points)
    pqa = np.empty(record_points)
    drift = np.empty(record_points)

    def record(k):
        norm = float(np.vdot(psi, psi).real)
        drift[k] = abs(norm - 1.0)
        if drift[k] > 10 * TOL_NORM:
            raise DynamicsError(f"norm drift {drift[k]:.3e} at t={times[k]:.6g} exceeds {10 * TOL_NORM:g}")
        pqa[k] = float(np.sum(np.abs(psi[targets]) ** 2))

    record(0)
    n_steps = 0
    for k in range(1, record_points):
        span = times[k] - times[k - 1]
        m = max(1, int(np.ceil(span * h_norm / max_phase)))
        dt = span / m
        u_mid = schedule(times[k - 1] + (np.arange(m) + 0.5) * dt)
        psi = step(psi, diagonal, n, u_mid, dt)
        n_steps += m
        record(k)

    return EvolutionResult(
        times=times,
        controls=schedule(times),
        pqa=pqa,
        schedule_label=schedule.label.value,
        norm_drift=float(drift.max()),
        degenerate=len(targets) > 1,
        n_steps=n_steps,
    )


def success_probability(result: EvolutionResult) -> float:
    return result.final_success
