"""Command line entry point: ``simkv <subcommand>``.

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 numeric error.
"""

import argparse
import logging
import sys
from pathlib import Path

from simkv import analysis
from simkv.config import parse_config
from simkv.errors import SimkvError
from simkv.experiment import rows_csv, run_experiment, theory_report
from simkv.models import CurieWeissSpec, make_sin_cos_dataset, write_dataset
from simkv.rng import DATASET_STREAM, RngStream

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_NUMERIC = 0, 2, 3, 4


def cmd_simulate(args):
    cfg = parse_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.reps is not None:
        overrides["reps"] = args.reps
    if overrides:
        from simkv.config import parse_config_data

        data = cfg.model_dump(mode="json", by_alias=True)
        data.update(overrides)
        cfg = parse_config_data(data, args.config)
    out = Path(args.out) if args.out else Path(cfg.out_dir)
    result = run_experiment(cfg, workers=args.workers, out_dir=out)
    rep = result.stationary_report
    print(f"wrote {out}/loss.csv ({len(result.loss_series)} rows), {out}/stationary.csv")
    for metric in ("EY0sq", "oracle_EY0sq", "frac_Y0_near_fixed_points", "final_loss_mean"):
        if metric in rep:
            print(f"  {metric} = {rep[metric]:.6g} (stderr {rep.stderr(metric):.3g})")
    if result.failures:
        reps = ", ".join(f"{r}@step{s}" for r, s in sorted(result.failures.items()))
        print(f"error: {len(result.failures)} repetition(s) diverged: {reps}", file=sys.stderr)
        return EXIT_DIVERGENCE
    return EXIT_OK


def cmd_theory(args):
    text = theory_report(args.config)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "theory.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_fixed_points(args):
    spec = CurieWeissSpec(args.alpha, args.beta)
    roots = analysis.curie_weiss_fixed_points(spec, grid_step=args.grid_step)
    text = rows_csv(["root"], [(r,) for r in roots])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "fixed_points.csv").write_text(text)
    sys.stdout.write(text)
    print(f"# Pi0'(0) = {analysis.curie_weiss_pi0_slope_at_zero(spec):.6g}", file=sys.stderr)
    return EXIT_OK


def cmd_make_dataset(args):
    z, labels = make_sin_cos_dataset(args.K, RngStream(args.seed, DATASET_STREAM))
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "dataset.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(out, z, labels)
    print(f"wrote {out} ({args.K} rows)")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="simkv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run repetitions from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, help="override master_seed")
    s.add_argument("--reps", type=int, help="override reps")
    s.add_argument("--out", help="output directory (default: config out_dir)")
    s.add_argument("--workers", type=int, help="worker processes (default: $SIMKV_WORKERS or 1)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("theory", help="evaluate contraction constants and stationary bounds")
    s.add_argument("--config", required=True, help="JSON with contraction/stationary/gaussian_oracle sections")
    s.add_argument("--out", help="directory for theory.csv")
    s.set_defaults(func=cmd_theory)

    s = sub.add_parser("curie-weiss-fixed-points", help="solve Pi0(y) = y for ell0 = alpha tanh(beta x)")
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--grid-step", type=float)
    s.add_argument("--out", help="directory for fixed_points.csv")
    s.set_defaults(func=cmd_fixed_points)

    s = sub.add_parser("make-dataset", help="sample the sin/cos regression dataset")
    s.add_argument("--K", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="CSV file or directory")
    s.set_defaults(func=cmd_make_dataset)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SimkvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
