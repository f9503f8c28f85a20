"""Monte Carlo experiments comparing annealing schedules on random detection problems.

For every sampled instance the same Ising model is annealed under each
requested strategy:

* ``mean``: the generic schedule built once from the mean squared gap, dilated by ``lam``;
* ``opti``: the instance's own locally adiabatic schedule;
* ``lin``:  a linear ramp lasting as long as the (dilated) mean schedule.

Instance ``k`` draws from ``default_rng([master_seed, 0, k])`` and the mean-gap
sampler from ``default_rng([master_seed, 1])``, so results do not depend on
worker scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import evolve
from .ising_map import IsingModel, build_ising
from .scheduler import (
    DEFAULT_EPS,
    DEFAULT_MEAN_GAP_SAMPLES,
    Schedule,
    ScheduleLabel,
    cached_mean_profile,
    dilate,
    linear_schedule,
    optimal_schedule,
)
from .signal_model import (
    ChannelModel,
    CodeBook,
    ProblemInstance,
    builtin_codebook,
    check_decodability,
    generate_codebook,
    read_codebook,
    sample_instance,
    snr_to_noise_std,
)
from .spectral import gap_profile

log = logging.getLogger(__name__)

STRATEGIES = ("mean", "opti", "lin")
SCHEMA_VERSION = 1
MAX_FAILURE_FRACTION = 0.05
DESK_SAMPLES = 100
FULL_SAMPLES = 500
_INSTANCE_STREAM = 0
_MEAN_GAP_STREAM = 1


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    n_users: int
    codebook: str = "builtin"  # builtin | generate | file
    codebook_file: str | None = None
    code_length: int | None = None
    codebook_seed: int = 0
    channel: str = "perfect"
    snr_db: float | None = 20.0  # None means noiseless
    strategies: tuple[str, ...] = STRATEGIES
    lam: float = 1.0
    eps: float = DEFAULT_EPS
    n_samples: int = DESK_SAMPLES
    mean_gap_samples: int = DEFAULT_MEAN_GAP_SAMPLES
    master_seed: int = 0
    histogram_bins: int = 20
    workers: int = 1
    cache_dir: str | None = None

    def __post_init__(self):
        self.strategies = tuple(self.strategies)
        self.channel = ChannelModel(self.channel).value
        if not self.strategies:
            raise ValueError("at least one strategy is required")
        unknown = set(self.strategies) - set(STRATEGIES)
        if unknown:
            raise ValueError(f"unknown strategies {sorted(unknown)}; choose from {STRATEGIES}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.lam < 1:
            raise ValueError("lambda must be >= 1")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.codebook not in ("builtin", "generate", "file"):
            raise ValueError(f"codebook source must be builtin, generate or file, got {self.codebook!r}")
        if self.snr_db is not None and isinstance(self.snr_db, str):
            self.snr_db = None if self.snr_db == "noiseless" else float(self.snr_db)

    @property
    def noise_std(self) -> float:
        return 0.0 if self.snr_db is None else snr_to_noise_std(self.snr_db)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategies"] = list(self.strategies)
        d["lambda"] = d.pop("lam")
        return d


@dataclass
class StrategyOutcome:
    pqa: float = math.nan
    annealing_time: float = math.nan
    norm_drift: float = math.nan
    degenerate: bool = False
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class SampleRecord:
    index: int
    seed: str
    pattern: str
    w_digest: str
    local_fields: np.ndarray
    couplings: np.ndarray
    outcomes: dict[str, StrategyOutcome]

    @property
    def failed(self) -> bool:
        return any(not o.ok for o in self.outcomes.values())

    @property
    def degenerate(self) -> bool:
        return any(o.degenerate for o in self.outcomes.values())


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    codebook_digest: str
    mean_annealing_time: float
    records: list[SampleRecord]
    bin_edges: np.ndarray = field(default=None)

    @property
    def valid_records(self) -> list[SampleRecord]:
        return [r for r in self.records if not r.failed]

    @property
    def n_failed(self) -> int:
        return sum(r.failed for r in self.records)

    @property
    def n_degenerate(self) -> int:
        return sum(r.degenerate for r in self.records)

    def values(self, strategy: str) -> np.ndarray:
        return np.array([r.outcomes[strategy].pqa for r in self.valid_records])

    def expectation(self, strategy: str) -> float:
        """Sample-mean estimate of E[P_QA] for ``strategy``."""
        return float(np.mean(self.values(strategy)))

    def stderr(self, strategy: str) -> float:
        v = self.values(strategy)
        return float(np.std(v, ddof=1) / np.sqrt(len(v))) if len(v) > 1 else math.nan

    def paired_difference(self, a: str, b: str) -> tuple[float, float]:
        """Mean and standard error of ``P_QA[a] - P_QA[b]`` over common samples."""
        d = self.values(a) - self.values(b)
        se = float(np.std(d, ddof=1) / np.sqrt(len(d))) if len(d) > 1 else math.nan
        return float(np.mean(d)), se

    def histogram(self, strategy: str) -> np.ndarray:
        counts, _ = np.histogram(np.clip(self.values(strategy), 0.0, 1.0), bins=self.bin_edges)
        return counts


def resolve_codebook(config: ExperimentConfig) -> CodeBook:
    if config.codebook == "builtin":
        cb = builtin_codebook(config.n_users)
    elif config.codebook == "file":
        if not config.codebook_file:
            raise ValueError("codebook_file is required for codebook source 'file'")
        cb = read_codebook(config.codebook_file)
    else:
        if config.code_length is None:
            raise ValueError("code_length is required for codebook source 'generate'")
        cb = generate_codebook(config.n_users, config.code_length, np.random.default_rng(config.codebook_seed))
    if cb.n_users != config.n_users:
        raise ValueError(f"codebook has {cb.n_users} users, config expects {config.n_users}")
    if not check_decodability(cb):
        log.warning("codebook %s is not decodable; noiseless ground states may be degenerate", cb.digest())
    return cb


def instance_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, _INSTANCE_STREAM, index])


def mean_gap_rng(master_seed: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, _MEAN_GAP_STREAM])


def build_mean_schedule(config: ExperimentConfig, codebook: CodeBook) -> Schedule:
    """Undilated generic schedule: exact mean gap for perfect channels, sampled for Rayleigh."""
    profile = cached_mean_profile(
        codebook,
        ChannelModel(config.channel),
        cache_dir=config.cache_dir,
        n_samples=config.mean_gap_samples,
        seed=f"{config.master_seed}/{_MEAN_GAP_STREAM}",
        rng=mean_gap_rng(config.master_seed),
    )
    return optimal_schedule(profile, config.eps, label=ScheduleLabel.MEAN)


def _outcome(model: IsingModel, schedule: Schedule) -> StrategyOutcome:
    res = evolve(model, schedule, record_points=2)
    return StrategyOutcome(res.final_success, res.annealing_time, res.norm_drift, res.degenerate)


def run_instance_strategies(
    model: IsingModel,
    mean_schedule: Schedule | None,
    eps: float = DEFAULT_EPS,
    lam: float = 1.0,
    strategies=STRATEGIES,
) -> dict[str, StrategyOutcome]:
    """Anneal one instance under each strategy; a failing strategy does not stop the others."""
    plans = {
        "mean": lambda: dilate(mean_schedule, lam),
        "opti": lambda: optimal_schedule(gap_profile(model), eps),
        "lin": lambda: linear_schedule(lam * mean_schedule.annealing_time),
    }
    out = {}
    for name in strategies:
        try:
            out[name] = _outcome(model, plans[name]())
        except Exception as exc:  # recorded per strategy, never fatal here
            log.warning("strategy %s failed: %s", name, exc)
            out[name] = StrategyOutcome(error=f"{type(exc).__name__}: {exc}")
    return out


def _digest(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype="<f8").tobytes()).hexdigest()[:12]


def _run_sample(args) -> SampleRecord:
    config, codebook, mean_schedule, index = args
    inst: ProblemInstance = sample_instance(
        codebook, ChannelModel(config.channel), config.noise_std, instance_rng(config.master_seed, index)
    )
    model = build_ising(codebook, inst.received, inst.channel)
    outcomes = run_instance_strategies(model, mean_schedule, config.eps, config.lam, config.strategies)
    return SampleRecord(
        index=index,
        seed=f"{config.master_seed}:{index}",
        pattern="".join(str(b) for b in inst.activity_pattern),
        w_digest=_digest(inst.channel),
        local_fields=model.local_fields,
        couplings=model.couplings,
        outcomes=outcomes,
    )


def run_experiment(config: ExperimentConfig, mean_schedule: Schedule | None = None) -> ExperimentReport:
    """Sample ``n_samples`` instances and anneal each under every configured strategy.

    ``mean_schedule`` may be supplied to skip rebuilding it (it must come from
    the same codebook and channel regime).
    """
    codebook = resolve_codebook(config)
    needs_mean = "mean" in config.strategies or "lin" in config.strategies
    if mean_schedule is None and needs_mean:
        log.info("building mean schedule for N=%d (%s channel)", config.n_users, config.channel)
        mean_schedule = build_mean_schedule(config, codebook)

    jobs = [(config, codebook, mean_schedule, k) for k in range(config.n_samples)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_sample, jobs, chunksize=4))
    else:
        records = []
        for k, job in enumerate(jobs):
            records.append(_run_sample(job))
            if (k + 1) % 10 == 0:
                log.info("sample %d/%d", k + 1, config.n_samples)

    report = ExperimentReport(
        config=config,
        codebook_digest=codebook.digest(),
        mean_annealing_time=mean_schedule.annealing_time if needs_mean else math.nan,
        records=records,
        bin_edges=np.linspace(0.0, 1.0, config.histogram_bins + 1),
    )
    if report.n_failed > MAX_FAILURE_FRACTION * config.n_samples:
        raise ExperimentError(
            f"{report.n_failed} of {config.n_samples} samples failed (limit {MAX_FAILURE_FRACTION:.0%})"
        )
    return report


def _fmt(x: float) -> str:
    return repr(float(x))


def summary_dict(report: ExperimentReport) -> dict:
    cfg = report.config
    strategies = list(cfg.strategies)
    summary = {
        "schema": SCHEMA_VERSION,
        "version": __version__,
        "config": cfg.to_dict(),
        "codebook_digest": report.codebook_digest,
        "seeds": {
            "master_seed": cfg.master_seed,
            "instance_stream": f"default_rng([{cfg.master_seed}, {_INSTANCE_STREAM}, index])",
            "mean_gap_stream": f"default_rng([{cfg.master_seed}, {_MEAN_GAP_STREAM}])",
        },
        "mean_annealing_time": report.mean_annealing_time,
        "n_samples": len(report.records),
        "n_failed": report.n_failed,
        "n_degenerate": report.n_degenerate,
        "expectations": {
            s: {"mean": report.expectation(s), "stderr": report.stderr(s), "n": len(report.values(s))}
            for s in strategies
        },
        "paired_differences": {},
    }
    for a, b in (("opti", "mean"), ("mean", "lin")):
        if a in strategies and b in strategies:
            m, se = report.paired_difference(a, b)
            summary["paired_differences"][f"{a}-{b}"] = {"mean": m, "stderr": se}
    return json.loads(json.dumps(summary, allow_nan=True))


_PLOT_TEMPLATE = """\
# Paired P_QA histograms; render with: gnuplot plot.gp
set datafile separator ','
set terminal pngcairo size 900,600
set output 'histogram.png'
set style data histograms
set style histogram clustered gap 1
set style fill solid 0.6 border -1
set xlabel 'P_QA'
set ylabel 'count'
set xtics rotate by -45
set title 'N={n_users}, {channel} channel, {snr}, lambda={lam}'
plot {plots}
"""

_COLORS = {"mean": "#1f77b4", "opti": "#d62728", "lin": "#2ca02c"}


def emit_report(report: ExperimentReport, out_dir) -> dict[str, Path]:
    """Write samples.csv, histogram.csv, summary.json and plot.gp into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ExperimentError(f"cannot create output directory {out}: {exc}") from exc
    cfg = report.config
    n = cfg.n_users
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    paths = {name: out / name for name in ("samples.csv", "histogram.csv", "summary.json", "plot.gp")}

    try:
        with open(paths["samples.csv"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(
                ["sample", "seed", "strategy", "pattern", "w_digest", "annealing_time", "pqa",
                 "norm_drift", "degenerate", "status"]
                + [f"h_{i}" for i in range(n)]
                + [f"J_{i}_{j}" for i, j in pairs]
            )
            for r in report.records:
                hj = [_fmt(v) for v in r.local_fields] + [_fmt(r.couplings[i, j]) for i, j in pairs]
                for s in cfg.strategies:
                    o = r.outcomes[s]
                    w.writerow(
                        [r.index, r.seed, s, r.pattern, r.w_digest, _fmt(o.annealing_time), _fmt(o.pqa),
                         _fmt(o.norm_drift), int(o.degenerate), "ok" if o.ok else o.error]
                        + hj
                    )

        with open(paths["histogram.csv"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi"] + list(cfg.strategies))
            counts = {s: report.histogram(s) for s in cfg.strategies}
            for k in range(len(report.bin_edges) - 1):
                w.writerow(
                    [_fmt(report.bin_edges[k]), _fmt(report.bin_edges[k + 1])]
                    + [int(counts[s][k]) for s in cfg.strategies]
                )

        paths["summary.json"].write_text(json.dumps(summary_dict(report), indent=2) + "\n")

        plots = ", ".join(
            f"'histogram.csv' using {3 + k}:xtic(sprintf('%.2f', $1)) title '{s}' lc rgb '{_COLORS[s]}'"
            for k, s in enumerate(cfg.strategies)
        )
        snr = "noiseless" if cfg.snr_db is None else f"SNR={cfg.snr_db:g} dB"
        paths["plot.gp"].write_text(
            _PLOT_TEMPLATE.format(n_users=n, channel=cfg.channel, snr=snr, lam=f"{cfg.lam:g}", plots=plots)
        )
    except OSError as exc:
        raise ExperimentError(f"failed writing report to {out}: {exc}") from exc
    return paths
