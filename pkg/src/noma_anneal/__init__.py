"""Quantum-annealing schedules for MAP active-user detection in NOMA networks."""

__version__ = "0.1.0"

from .dynamics import EvolutionResult, evolve, initial_state, success_probability
from .ising_map import (
    IsingModel,
    bits_from_spins,
    brute_force_map,
    build_ising,
    ising_energy,
    qubo_objective,
    spins_from_bits,
)
from .scheduler import (
    Schedule,
    ScheduleLabel,
    annealing_time,
    dilate,
    linear_schedule,
    mean_gap_exact,
    mean_gap_sampled,
    optimal_schedule,
)
from .signal_model import (
    ChannelModel,
    CodeBook,
    ProblemInstance,
    assemble_signal,
    builtin_codebook,
    check_decodability,
    generate_codebook,
    sample_instance,
    snr_to_noise_std,
)
from .spectral import GapProfile, build_problem_diagonal, gap_profile, gap_squared_at, ground_state, hamiltonian_at
