"""Command-line entry point: ``noma-anneal {codebook,gap,schedule,anneal,experiment}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .dynamics import evolve
from .harness import (
    FULL_SAMPLES,
    ExperimentConfig,
    build_mean_schedule,
    emit_report,
    resolve_codebook,
    run_experiment,
    summary_dict,
)
from .ising_map import build_ising
from .scheduler import (
    ScheduleLabel,
    annealing_time,
    dilate,
    linear_schedule,
    optimal_schedule,
)
from .signal_model import (
    ChannelModel,
    assemble_signal,
    builtin_codebook,
    check_decodability,
    draw_channel,
    generate_codebook,
    read_codebook,
    sample_instance,
    snr_to_noise_std,
    write_codebook,
)
from .spectral import GapProfile, default_grid, gap_profile, levels_at


def _write_rows(path, header, rows):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    finally:
        if path:
            fh.close()


def _add_instance_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, required=True, help="number of users")
    p.add_argument("--codebook", default="builtin", help="'builtin' or a codebook file path")
    p.add_argument("--channel", choices=[c.value for c in ChannelModel], default="perfect")
    p.add_argument("--snr", type=float, default=None, help="SNR in dB (default: noiseless)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pattern", default=None, help="fixed activity pattern as a bit-string, e.g. 10000000")


def _instance_model(args):
    cb = builtin_codebook(args.n) if args.codebook == "builtin" else read_codebook(args.codebook)
    if cb.n_users != args.n:
        raise ValueError(f"codebook has {cb.n_users} users, --n is {args.n}")
    xi = 0.0 if args.snr is None else snr_to_noise_std(args.snr)
    rng = np.random.default_rng(args.seed)
    if args.pattern is None:
        inst = sample_instance(cb, ChannelModel(args.channel), xi, rng)
        y, w = inst.received, inst.channel
    else:
        b = np.array([int(c) for c in args.pattern])
        w = draw_channel(ChannelModel(args.channel), cb.n_users, rng)
        y = assemble_signal(cb, b, w, xi * rng.standard_normal(cb.code_length))
    return cb, build_ising(cb, y, w)


def _read_profile(path) -> GapProfile:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return GapProfile(data["u"], data["gap_sq"])


def _schedule_from_args(args, cb, model):
    kind = args.kind
    if kind == "mean":
        cfg = ExperimentConfig(
            n_users=cb.n_users,
            channel=args.channel,
            eps=args.eps,
            mean_gap_samples=args.mean_gap_samples,
            master_seed=args.seed,
            cache_dir=args.cache_dir,
            codebook="builtin" if args.codebook == "builtin" else "file",
            codebook_file=None if args.codebook == "builtin" else args.codebook,
        )
        sched = build_mean_schedule(cfg, cb)
    else:
        profile = _read_profile(args.profile) if getattr(args, "profile", None) else gap_profile(model)
        if kind == "optimal":
            sched = optimal_schedule(profile, args.eps)
        else:
            T = args.T if args.T is not None else annealing_time(profile, args.eps)
            sched = linear_schedule(T)
    return dilate(sched, args.lam)


def cmd_codebook(args) -> int:
    if args.builtin is not None:
        cb = builtin_codebook(args.builtin)
    else:
        if args.n is None or args.m is None:
            raise ValueError("either --builtin or both --n and --m are required")
        cb = generate_codebook(args.n, args.m, np.random.default_rng(args.seed))
    if args.out:
        write_codebook(cb, args.out)
    else:
        sys.stdout.write(f"{cb.n_users} {cb.code_length}\n")
        for row in cb.signs:
            sys.stdout.write(" ".join(f"{s:+d}" for s in row) + "\n")
    print(json.dumps({"digest": cb.digest(), "decodable": check_decodability(cb)}), file=sys.stderr)
    return 0


def cmd_gap(args) -> int:
    _, model = _instance_model(args)
    profile = gap_profile(model, default_grid(args.grid), refine=not args.no_refine)
    _write_rows(args.out, ["u", "gap_sq"], zip(profile.u_grid, profile.gap_sq))
    if args.levels:
        rows = [(u, *levels_at(model, u, 2)) for u in profile.u_grid]
        _write_rows(args.levels, ["u", "eps0", "eps1"], rows)
    return 0


def cmd_schedule(args) -> int:
    if args.profile is None and args.n is None:
        raise ValueError("--profile or instance options (--n ...) are required")
    if args.profile is not None and args.kind != "mean":
        cb, model = None, None
    else:
        cb, model = _instance_model(args)
    sched = _schedule_from_args(args, cb, model)
    _write_rows(args.out, ["t", "u"], zip(sched.times, sched.values))
    return 0


def cmd_anneal(args) -> int:
    cb, model = _instance_model(args)
    sched = _schedule_from_args(args, cb, model)
    res = evolve(model, sched, record_points=args.record_points)
    _write_rows(args.out, ["t", "u", "pqa"], zip(res.times, res.controls, res.pqa))
    summary = {
        "final_success": res.final_success,
        "norm_drift": res.norm_drift,
        "T": res.annealing_time,
        "schedule": res.schedule_label,
        "degenerate": res.degenerate,
    }
    text = json.dumps(summary, indent=2)
    if args.summary:
        Path(args.summary).write_text(text + "\n")
    else:
        print(text, file=sys.stderr)
    return 0


_CONFIG_FLAGS = {
    "n_users": int,
    "codebook": str,
    "codebook_file": str,
    "code_length": int,
    "codebook_seed": int,
    "channel": str,
    "snr_db": str,
    "lam": float,
    "eps": float,
    "n_samples": int,
    "mean_gap_samples": int,
    "master_seed": int,
    "histogram_bins": int,
    "workers": int,
    "cache_dir": str,
}


def cmd_experiment(args) -> int:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    cfg_dict = dict(data)
    if "lambda" in cfg_dict:
        cfg_dict["lam"] = cfg_dict.pop("lambda")
    for key in _CONFIG_FLAGS:
        v = getattr(args, key)
        if v is not None:
            cfg_dict[key] = v
    if args.strategies:
        cfg_dict["strategies"] = args.strategies.split(",")
    if args.full:
        cfg_dict["n_samples"] = FULL_SAMPLES
    if "n_users" not in cfg_dict:
        raise ValueError("n_users is required (config key or --n-users)")
    cfg = ExperimentConfig.from_dict(cfg_dict)
    report = run_experiment(cfg)
    emit_report(report, args.out)
    print(json.dumps(summary_dict(report)["expectations"], indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noma-anneal", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("codebook", help="print or generate a codebook")
    p.add_argument("--builtin", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_codebook)

    p = sub.add_parser("gap", help="squared spectral gap of one instance")
    _add_instance_args(p)
    p.add_argument("--grid", type=int, default=129)
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--levels", help="also write u,eps0,eps1 to this CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gap)

    def schedule_args(p, need_instance):
        if need_instance:
            _add_instance_args(p)
        p.add_argument("--kind", choices=["optimal", "linear", "mean"], default="optimal")
        p.add_argument("--eps", type=float, default=0.1)
        p.add_argument("--lambda", dest="lam", type=float, default=1.0)
        p.add_argument("--T", type=float, default=None, help="linear schedule duration")
        p.add_argument("--mean-gap-samples", type=int, default=2000)
        p.add_argument("--cache-dir")

    p = sub.add_parser("schedule", help="control function u(t) as CSV")
    p.add_argument("--profile", help="CSV with columns u,gap_sq")
    p.add_argument("--n", type=int)
    p.add_argument("--codebook", default="builtin")
    p.add_argument("--channel", choices=[c.value for c in ChannelModel], default="perfect")
    p.add_argument("--snr", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pattern", default=None)
    schedule_args(p, need_instance=False)
    p.add_argument("--out")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("anneal", help="simulate one anneal; CSV t,u,pqa and JSON summary")
    _add_instance_args(p)
    schedule_args(p, need_instance=False)
    p.add_argument("--profile", help="CSV with columns u,gap_sq (optimal/linear kinds)")
    p.add_argument("--record-points", type=int, default=200)
    p.add_argument("--out")
    p.add_argument("--summary")
    p.set_defaults(func=cmd_anneal)

    p = sub.add_parser("experiment", help="Monte Carlo success-probability experiment")
    p.add_argument("--config")
    p.add_argument("--full", action="store_true", help=f"use {FULL_SAMPLES} samples")
    p.add_argument("--out", default="results")
    p.add_argument("--strategies", help="comma-separated subset of mean,opti,lin")
    for key, typ in _CONFIG_FLAGS.items():
        flag = "--lambda" if key == "lam" else "--" + key.replace("_", "-")
        p.add_argument(flag, dest=key, type=typ, default=None)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
