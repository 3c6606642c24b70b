"""Batch orchestration: repetitions, aggregation and CSV artifacts.

Repetitions are grouped into fixed blocks of ``block_size`` rows that are
simulated together as one vectorized batch. Rep ``r`` always uses
``stream(master_seed, r)``, and block boundaries depend only on the config,
so the worker count changes wall time and nothing else.
"""

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from simkv import analysis
from simkv.config import build_schedule
from simkv.dynamics import GaussianInit, Recorder, init_sample, simulate
from simkv.errors import ConfigurationError
from simkv.models import (
    CurieWeissSpec,
    GaussianModelSpec,
    NNetSpec,
    curie_weiss_model,
    gaussian_model,
    make_sin_cos_dataset,
    nnet_model,
    read_dataset,
)
from simkv.rng import DATASET_STREAM, RngStream, streams

log = logging.getLogger(__name__)


def load_dataset(cfg):
    m = cfg.model
    if m.dataset_path:
        z, labels = read_dataset(m.dataset_path)
        if len(labels) != m.K:
            raise ConfigurationError(f"dataset {m.dataset_path} has {len(labels)} rows but K={m.K}")
        return z, labels
    return make_sin_cos_dataset(m.K, RngStream(cfg.master_seed, DATASET_STREAM))


def build_model(cfg):
    m = cfg.model
    if m.type == "gaussian":
        return gaussian_model(GaussianModelSpec(m.d))
    if m.type == "curie_weiss":
        return curie_weiss_model(CurieWeissSpec(m.alpha, m.beta))
    z, labels = load_dataset(cfg)
    return nnet_model(NNetSpec(z, labels, m.L_trunc, m.sigma2_half, m.gamma))


def rep_blocks(reps, block_size):
    return [list(range(s, min(s + block_size, reps))) for s in range(0, reps, block_size)]


@dataclass
class BlockResult:
    reps: list
    times: np.ndarray
    losses: np.ndarray  # (n_rec, B)
    x_samples: np.ndarray  # (n_samp, B, d)
    y_samples: np.ndarray  # (n_samp, B, D)
    x_final: np.ndarray
    y_final: np.ndarray
    failures: dict  # global rep -> step


def run_block(cfg, reps):
    model = build_model(cfg)
    schedule = build_schedule(cfg.schedule)
    rngs = streams(cfg.master_seed, reps)
    init_cfg = cfg.effective_init
    m0 = GaussianInit(tuple(np.atleast_1d(init_cfg.mean)) if isinstance(init_cfg.mean, list) else init_cfg.mean,
                      init_cfg.std)
    init = init_sample(model, m0, rngs)
    rec = Recorder(stride=cfg.record_stride, sample_stride=cfg.effective_sample_stride,
                   burn_in=cfg.effective_burn_in)
    traj = simulate(model, schedule, init, cfg.dt, cfg.T, rngs, rec, on_divergence="mask")
    failures = {reps[row]: step for row, step in traj.failures.items()}
    B, d, D = len(reps), model.d, model.D
    xs = traj.x_samples if traj.x_samples.size else np.empty((0, B, d))
    ys = traj.y_samples if traj.y_samples.size else np.empty((0, B, D))
    losses = traj.losses if traj.losses.size else np.empty((0, B))
    return BlockResult(reps, traj.times, losses, xs, ys, traj.state.x, traj.state.y, failures)


def _run_block_args(args):
    return run_block(*args)


def resolve_workers(workers=None):
    if workers is None:
        env = os.environ.get("SIMKV_WORKERS")
        workers = int(env) if env else 1
    if workers < 1:
        raise ConfigurationError(f"workers must be >= 1, got {workers}")
    return workers


def _pointwise(values):
    """Mean and standard error over reps for each row, skipping failed (NaN) reps."""
    out = []
    for row in values:
        ok = row[np.isfinite(row)]
        if ok.size == 0:
            out.append((math.nan, math.nan))
            continue
        se = float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else 0.0
        out.append((float(ok.mean()), se))
    return out


@dataclass
class RunResult:
    loss_series: list  # (t, mean_loss, stderr)
    stationary_report: analysis.Report
    terminal_states_path: str | None = None
    failures: dict = field(default_factory=dict)
    per_rep_losses: np.ndarray | None = None  # (n_rec, reps)
    times: np.ndarray | None = None

    @property
    def ok(self):
        return not self.failures

    def loss_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "mean_loss", "stderr"])
        for t, m, s in self.loss_series:
            w.writerow([repr(float(t)), repr(m), repr(s)])
        return buf.getvalue()


def stationary_report(cfg, model, xs, ys, losses, times):
    burn = cfg.effective_burn_in
    rep = analysis.Report()
    kind = cfg.model.type
    if xs.shape[0] * xs.shape[1] >= 2:
        if kind == "gaussian":
            rep = analysis.empirical_stats(
                xs, ys, oracle=analysis.gaussian_oracle(cfg.schedule.lam, model.d)
                if cfg.schedule.type == "constant" else None)
        elif kind == "curie_weiss":
            fp = analysis.curie_weiss_fixed_points(CurieWeissSpec(cfg.model.alpha, cfg.model.beta))
            rep = analysis.empirical_stats(xs, ys, y0_index=[0], fixed_points=fp)
        else:
            rep = analysis.empirical_stats(xs, ys, y0_index=[])
    post = losses[times >= burn] if losses.size else losses
    if post.size:
        rep.add("mean_loss_post_burn_in", *analysis.batch_mean(post))
    if losses.size:
        final = losses[-1]
        rep.add("final_loss_mean", *_pointwise(final[None, :])[0])
    return rep


def run_experiment(cfg, workers=None, out_dir=None, write=True):
    """Simulate ``cfg.reps`` repetitions and aggregate them.

    Loss statistics are pointwise in t over repetitions. Diverged reps are
    reported in ``failures`` and excluded from every statistic.
    """
    workers = resolve_workers(workers)
    blocks = rep_blocks(cfg.reps, cfg.block_size)
    log.info("running %d reps in %d blocks on %d worker(s)", cfg.reps, len(blocks), workers)
    if workers == 1 or len(blocks) == 1:
        results = [run_block(cfg, b) for b in blocks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(blocks))) as pool:
            results = list(pool.map(_run_block_args, [(cfg, b) for b in blocks]))

    model = build_model(cfg)
    times = results[0].times
    losses = np.concatenate([r.losses for r in results], axis=1)
    xs = np.concatenate([r.x_samples for r in results], axis=1)
    ys = np.concatenate([r.y_samples for r in results], axis=1)
    failures = {}
    for r in results:
        failures.update(r.failures)
    alive = np.array([rep not in failures for rep in range(cfg.reps)])
    series = [(t, m, s) for t, (m, s) in zip(times, _pointwise(losses))]
    report = stationary_report(cfg, model, xs[:, alive], ys[:, alive], losses[:, alive], times)
    report.add("reps_completed", int(alive.sum()))

    result = RunResult(series, report, failures=failures, per_rep_losses=losses, times=times)
    if write:
        out = Path(out_dir if out_dir is not None else cfg.out_dir)
        write_outputs(result, cfg, model, results, out)
    return result


def write_outputs(result, cfg, model, blocks, out):
    out.mkdir(parents=True, exist_ok=True)
    (out / "loss.csv").write_text(result.loss_csv())
    (out / "stationary.csv").write_text(result.stationary_report.to_csv())
    (out / "config.json").write_text(cfg.to_json() + "\n")
    path = out / "terminal_states.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep"] + [f"x{i}" for i in range(model.d)] + [f"y{j}" for j in range(model.D)])
        for b in blocks:
            for row, rep in enumerate(b.reps):
                w.writerow([rep] + [repr(float(v)) for v in b.x_final[row]] + [repr(float(v)) for v in b.y_final[row]])
    result.terminal_states_path = str(path)
    if result.failures:
        with open(out / "failures.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rep", "step"])
            for rep in sorted(result.failures):
                w.writerow([rep, result.failures[rep]])
    elif (out / "failures.csv").exists():
        (out / "failures.csv").unlink()


# ---------------------------------------------------------------------------
# Theory


def theory_rows(params):
    """Rows (metric, value, status) from a dict with optional sections
    ``contraction``, ``stationary`` and ``gaussian_oracle``."""
    known = {"contraction", "stationary", "gaussian_oracle"}
    unknown = set(params) - known
    if unknown:
        raise ConfigurationError(f"unknown theory sections: {sorted(unknown)}")
    if not set(params) & known:
        raise ConfigurationError("theory params need at least one of: " + ", ".join(sorted(known)))
    rows = []
    try:
        if "contraction" in params:
            p = dict(params["contraction"])
            p["lam"] = p.pop("lambda")
            cc = analysis.contraction_constants(analysis.TheoryParams(**p))
            rows += [("C", cc.C, "ok"), ("c", cc.c, "ok"), ("M", cc.M, "ok"), ("K0", cc.K0, "ok")]
        if "stationary" in params:
            p = dict(params["stationary"])
            p["lam"] = p.pop("lambda")
            sb = analysis.stationary_bounds(analysis.StationaryBoundParams(**p))
            rows.append(("lambda0", sb.lambda0, "ok"))
            status = "ok" if sb.in_range else "out_of_range"
            for name in ("H", "v_bound", "W2sq_bound", "TVsq_bound"):
                val = getattr(sb, name)
                rows.append((name, math.nan if val is None else val, status))
            if p.get("M1") is not None:
                for name in ("H_prime", "v_bound_prime", "W2sq_bound_prime", "TVsq_bound_prime"):
                    rows.append((name, getattr(sb, name), "ok"))
            rows.append(("concave_bound", sb.concave_bound, "ok"))
        if "gaussian_oracle" in params:
            p = params["gaussian_oracle"]
            go = analysis.gaussian_oracle(p["lambda"], p.get("d", 1))
            rows += [("oracle_covXX", go.covXX, "ok"), ("oracle_covYY", go.covYY, "ok"),
                     ("oracle_covXY", go.covXY, "ok"), ("oracle_EY0sq", go.EY0sq, "ok"),
                     ("oracle_W2sq", go.W2sq, "ok"),
                     ("oracle_TVsq_lower_ref", go.TVsq_bracket[0], "reference"),
                     ("oracle_TVsq_upper_ref", go.TVsq_bracket[1], "reference")]
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"bad theory params: {exc}") from None
    return rows


def theory_report(params_file):
    try:
        params = json.loads(Path(params_file).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read {params_file}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{params_file}: line {exc.lineno}: invalid JSON: {exc.msg}") from None
    return rows_csv(["metric", "value", "status"], theory_rows(params))


def rows_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return buf.getvalue()
