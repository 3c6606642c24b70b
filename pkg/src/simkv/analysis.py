"""Closed-form constants, the Gaussian oracle, Curie-Weiss fixed points and
empirical statistics of simulated samples."""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from simkv.errors import ConfigurationError, EstimationError, NumericError

# ---------------------------------------------------------------------------
# Contraction constants


@dataclass(frozen=True)
class TheoryParams:
    kappa0: float
    Mb: float = 0.0
    L: float = 0.0
    M_omega: float = 0.0
    lam: float = 1.0

    def __post_init__(self):
        if not self.kappa0 > 0:
            raise ConfigurationError(f"kappa0 must be positive, got {self.kappa0}")
        if not self.lam > 0:
            raise ConfigurationError(f"lambda must be positive, got {self.lam}")
        for name in ("Mb", "L", "M_omega"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative, got {getattr(self, name)}")


@dataclass(frozen=True)
class ContractionConstants:
    C: float
    c: float
    M: float
    K0: float


def contraction_constants(p):
    """Prefactor C and rate c of the exponential contraction.

    M = Mb + 2 L M_omega and K0 = min(kappa0, lambda/2). Evaluated in log
    space so that small lambda gives c -> 0 and C -> inf instead of overflow.
    """
    M = p.Mb + 2.0 * p.L * p.M_omega
    K0 = min(p.kappa0, p.lam / 2.0)
    if M == 0:
        return ContractionConstants(C=1.0, c=K0, M=0.0, K0=K0)
    a = M * M / (4.0 * K0)
    log_C_excess = math.log(2.0 * M) - 0.5 * math.log(K0) + a
    C = 1.0 + (math.exp(log_C_excess) if log_C_excess < 700 else math.inf)
    log_inv_c = np.logaddexp(-math.log(K0), math.log(2.0 * M) - 1.5 * math.log(K0) + a)
    return ContractionConstants(C=C, c=math.exp(-log_inv_c), M=M, K0=K0)


# ---------------------------------------------------------------------------
# Stationary bounds


@dataclass(frozen=True)
class StationaryBoundParams:
    D: int
    d: int
    M2: float
    C_LS: float
    lam: float
    M1: float | None = None

    def __post_init__(self):
        if self.D < 1 or self.d < 1:
            raise ConfigurationError(f"dimensions must be positive, got D={self.D}, d={self.d}")
        for name in ("M2", "C_LS", "lam"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.M1 is not None and not self.M1 > 0:
            raise ConfigurationError(f"M1 must be positive when given, got {self.M1}")


@dataclass(frozen=True)
class StationaryBounds:
    lambda0: float
    in_range: bool
    H: float | None
    v_bound: float | None
    W2sq_bound: float | None
    TVsq_bound: float | None
    concave_bound: float
    H_prime: float | None = None
    v_bound_prime: float | None = None
    W2sq_bound_prime: float | None = None
    TVsq_bound_prime: float | None = None


def _bound_factors(M2, C):
    root = math.sqrt(M2 * M2 * C * C + 1.0)
    v = 4.0 * M2 * C * (M2 * M2 * C * C + 1.0)
    w2 = 2.0 * C + 4.0 * M2 * C * C * root
    tv = 4.0 + 8.0 * M2 * C * root
    return v, w2, tv


def stationary_bounds(p):
    """Bounds on the distance between the self-interacting stationary law and
    the mean-field invariant measure.

    H-based bounds exist only for lambda in (0, lambda0); outside that range
    ``in_range`` is False and they are None. The H' bounds are reported only
    when ``M1`` is supplied.
    """
    M2, C = p.M2, p.C_LS
    g = 1.0 + 2.0 * M2 * C * math.sqrt(M2 * M2 * C * C + 1.0)
    lambda0 = 1.0 / (48.0 * M2 * C * C * g)
    fv, fw, ft = _bound_factors(M2, C)
    in_range = 0 < p.lam < lambda0
    H = v = w = tv = None
    if in_range:
        H = C * (p.D + 24.0 * M2 * C * p.d) * p.lam / (2.0 - 96.0 * M2 * C * C * g * p.lam)
        v, w, tv = fv * H, fw * H, ft * H
    out = dict(lambda0=lambda0, in_range=in_range, H=H, v_bound=v, W2sq_bound=w, TVsq_bound=tv,
               concave_bound=M2 * C * C * p.D / 2.0 * p.lam)
    if p.M1 is not None:
        Hp = C / 2.0 * (p.D + 2.0 * p.M1) * p.lam
        out.update(H_prime=Hp, v_bound_prime=fv * Hp, W2sq_bound_prime=fw * Hp,
                   TVsq_bound_prime=ft * Hp)
    return StationaryBounds(**out)


# ---------------------------------------------------------------------------
# Gaussian model oracle


@dataclass(frozen=True)
class GaussianStationary:
    lam: float
    d: int
    covXX: float
    covYY: float
    covXY: float
    EY0sq: float
    W2sq: float
    TVsq_bracket: tuple  # reference interval, not a computed distance


def gaussian_oracle(lam, d):
    """Exact stationary moments of (X, Y0) for the Gaussian model, per coordinate."""
    if not lam > 0 or d < 1:
        raise ConfigurationError(f"need lambda > 0 and d >= 1, got {lam}, {d}")
    covXX = (lam + 2.0) / (4.0 * (lam + 1.0))
    covYY = lam / (4.0 * (lam + 1.0))
    W2sq = d / 2.0 * (1.0 - math.sqrt(1.0 - lam / (2.0 * (1.0 + lam)))) ** 2
    base = d * lam**2 / (4.0 * (1.0 + lam) ** 2)
    return GaussianStationary(lam=lam, d=d, covXX=covXX, covYY=covYY, covXY=covYY,
                              EY0sq=d * covYY, W2sq=W2sq, TVsq_bracket=(base / 10000.0, 2.25 * base))


def gaussian_w2sq(mean_a, var_a, mean_b, var_b):
    """Squared W2 between Gaussians with diagonal covariances."""
    mean_a, var_a, mean_b, var_b = map(np.asarray, (mean_a, var_a, mean_b, var_b))
    return float(((mean_a - mean_b) ** 2).sum() + ((np.sqrt(var_a) - np.sqrt(var_b)) ** 2).sum())


# ---------------------------------------------------------------------------
# Curie-Weiss self-consistency

PI0_NODES = 4001


def _pi0_grid(radius, n=PI0_NODES):
    # mirrored so the grid is exactly symmetric about 0
    half = np.linspace(0.0, radius, (n + 1) // 2)
    return np.concatenate([-half[:0:-1], half])


def curie_weiss_pi0(spec, y0):
    """Mean of ell0 under the density proportional to exp(2 y0 ell0(x) - x^2).

    Composite Simpson on [-R, R] with R = 6 + 2 |y0| sup|ell0| and 4001 nodes.
    """
    y0 = float(y0)
    S = spec.sup_norm
    if abs(y0) > 2.0 * S:
        raise ConfigurationError(f"y0={y0} outside the supported range [-{2 * S}, {2 * S}]")
    R = 6.0 + 2.0 * S * abs(y0)
    x = _pi0_grid(R)
    l0 = spec.ell0(x)
    expo = 2.0 * y0 * l0 - x * x
    top = expo.max()
    w = np.exp(expo - top)
    if max(w[0], w[-1]) > 1e-14:
        raise NumericError(f"quadrature window [-{R}, {R}] too small for y0={y0}")
    den = integrate.simpson(w, x=x)
    num = integrate.simpson(l0 * w, x=x)
    if not (den > 0 and math.isfinite(num)):
        raise NumericError(f"degenerate quadrature at y0={y0}")
    return float(num / den)


def curie_weiss_pi0_slope_at_zero(spec):
    """Pi0'(0) = 2 E[ell0(X)^2] for X ~ N(0, 1/2)."""
    x = _pi0_grid(8.0)
    w = np.exp(-x * x)
    return float(2.0 * integrate.simpson(spec.ell0(x) ** 2 * w, x=x) / integrate.simpson(w, x=x))


def curie_weiss_fixed_points(spec, grid_step=None, tol=1e-8):
    """All solutions of Pi0(y) = y in [-sup|ell0|, sup|ell0|], sorted.

    Pi0 is odd, so only y > 0 is scanned; negative roots are mirrored and 0
    is always included. Each root is bracketed by a sign change of Pi0(y) - y
    on the grid and refined by bisection to ``tol``.
    """
    S = spec.sup_norm
    step = S / 400.0 if grid_step is None else float(grid_step)
    if not step > 0:
        raise ConfigurationError(f"grid_step must be positive, got {grid_step}")
    n = max(int(math.ceil(S / step)), 1)
    ys = np.linspace(0.0, S, n + 1)[1:]

    def g(y):
        return curie_weiss_pi0(spec, y) - y

    vals = np.array([g(y) for y in ys])
    roots = []
    prev_y, prev_v = 0.0, None
    for y, v in zip(ys, vals):
        if v == 0.0:
            roots.append(float(y))
        elif prev_v is not None and prev_v != 0.0 and (prev_v < 0) != (v < 0):
            roots.append(float(optimize.bisect(g, prev_y, y, xtol=tol)))
        prev_y, prev_v = y, v
    roots = sorted(set(roots))
    return [-r for r in reversed(roots)] + [0.0] + roots


def distance_to_set(values, points):
    values = np.asarray(values, dtype=float)
    pts = np.asarray(points, dtype=float)
    return np.abs(values[..., None] - pts).min(axis=-1)


# ---------------------------------------------------------------------------
# Empirical statistics


def wasserstein2_1d(a, b):
    """Squared W2 between two empirical measures on the line.

    Couples quantiles: for equal sizes this is mean((sort(a) - sort(b))^2),
    for unequal sizes the quantile functions are integrated exactly over the
    merged grid of jump levels.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise EstimationError("empty sample")
    if a.size == b.size:
        return float(np.mean((a - b) ** 2))
    levels = np.union1d(np.arange(1, a.size + 1) / a.size, np.arange(1, b.size + 1) / b.size)
    widths = np.diff(np.concatenate([[0.0], levels]))
    mid = levels - widths / 2.0
    qa = a[np.minimum((mid * a.size).astype(int), a.size - 1)]
    qb = b[np.minimum((mid * b.size).astype(int), b.size - 1)]
    return float(np.sum(widths * (qa - qb) ** 2))


@dataclass
class Report:
    """Flat list of (metric, value, stderr) rows; stderr is NaN when undefined."""

    rows: list = field(default_factory=list)

    def add(self, metric, value, stderr=math.nan):
        self.rows.append((metric, float(value), float(stderr)))

    def extend(self, other):
        self.rows.extend(other.rows)

    def __getitem__(self, metric):
        for m, v, _ in self.rows:
            if m == metric:
                return v
        raise KeyError(metric)

    def stderr(self, metric):
        for m, _, s in self.rows:
            if m == metric:
                return s
        raise KeyError(metric)

    def __contains__(self, metric):
        return any(m == metric for m, _, _ in self.rows)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value", "stderr"])
        for m, v, s in self.rows:
            w.writerow([m, repr(v), repr(s)])
        return buf.getvalue()


def _batches(per_sample, n_batches=10):
    """Per-rep means of a (n, R) array; a single rep is cut into time batches."""
    n, R = per_sample.shape
    if R > 1:
        return per_sample.mean(axis=0)
    k = min(n_batches, n)
    return np.array([chunk.mean() for chunk in np.array_split(per_sample[:, 0], k)])


def batch_mean(per_sample):
    """Mean and batch-means standard error of a (n_samples, n_reps) array."""
    per_sample = np.asarray(per_sample, dtype=float)
    if per_sample.ndim == 1:
        per_sample = per_sample[:, None]
    means = _batches(per_sample)
    value = float(per_sample.mean())
    se = float(means.std(ddof=1) / math.sqrt(means.size)) if means.size > 1 else math.nan
    return value, se


def empirical_stats(x_samples, y_samples, y0_index=None, oracle=None, fixed_points=None,
                    near=0.25):
    """Stationary statistics of sampled states.

    ``x_samples`` is (n, d) or (n, R, d) and ``y_samples`` likewise with D;
    ``y0_index`` picks the feature coordinates that form Y0 (default: the
    first d; an empty list skips the Y0 metrics). Standard errors are batch
    means over repetitions. With a Gaussian ``oracle`` the report adds exact
    values and relative errors; with ``fixed_points`` it adds the fraction of
    Y0 samples within ``near``.
    """
    xs = np.asarray(x_samples, dtype=float)
    ys = np.asarray(y_samples, dtype=float)
    if xs.ndim == 2:
        xs, ys = xs[:, None, :], ys[:, None, :]
    if xs.ndim != 3 or ys.ndim != 3 or xs.shape[:2] != ys.shape[:2]:
        raise ConfigurationError(f"incompatible sample shapes {xs.shape} and {ys.shape}")
    if xs.shape[0] * xs.shape[1] < 2:
        raise EstimationError("need at least two samples")
    d = xs.shape[-1]
    idx = list(range(d)) if y0_index is None else list(np.atleast_1d(y0_index))
    y0 = ys[..., idx]

    rep = Report()
    rep.add("n_samples", xs.shape[0] * xs.shape[1])
    ey0 = math.nan
    if idx:
        ey0, se = batch_mean((y0**2).sum(axis=-1))
        rep.add("EY0sq", ey0, se)
    mean_x = xs.mean(axis=(0, 1))
    var_x = []
    for i in range(d):
        v, s = batch_mean((xs[..., i] - mean_x[i]) ** 2)
        var_x.append(v)
        rep.add(f"mean_X{i}", *batch_mean(xs[..., i]))
        rep.add(f"var_X{i}", v, s)
    if len(idx) == d:
        mean_y0 = y0.mean(axis=(0, 1))
        for i in range(d):
            rep.add(f"cov_X{i}_Y0_{i}", *batch_mean((xs[..., i] - mean_x[i]) * (y0[..., i] - mean_y0[i])))
    for j in range(ys.shape[-1]):
        rep.add(f"mean_Y{j}", *batch_mean(ys[..., j]))

    if oracle is not None and idx:
        rep.add("oracle_EY0sq", oracle.EY0sq)
        rep.add("relerr_EY0sq", abs(ey0 - oracle.EY0sq) / oracle.EY0sq)
        rep.add("oracle_var_X", oracle.covXX)
        for i in range(d):
            rep.add(f"relerr_var_X{i}", abs(var_x[i] - oracle.covXX) / oracle.covXX)
        w2 = gaussian_w2sq(mean_x, var_x, np.zeros(d), np.full(d, 0.5))
        rep.add("W2sq_X_vs_invariant", w2)
        rep.add("oracle_W2sq", oracle.W2sq)
    if fixed_points is not None and idx:
        close = (distance_to_set(y0[..., 0], fixed_points) <= near).astype(float)
        rep.add("frac_Y0_near_fixed_points", *batch_mean(close))
    return rep
