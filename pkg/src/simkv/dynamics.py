"""Euler time stepping for self-interacting diffusions and the N-particle system.

The self-interacting particle carries its features ``y = <ell, m_t>``
instead of the whole occupation measure. One Euler step reads::

    x' = x + drift(y, x) dt + sigma sqrt(dt) N
    y' = (1 - lambda dt) y + lambda dt ell(x')

with ``ell`` evaluated at the *new* position.

States may carry a leading batch axis, one row per repetition. Each row
draws its Gaussians from its own ``RngStream`` so a row's trajectory doesn't
depend on which other rows share the batch.
"""

from dataclasses import dataclass, field

import numpy as np

from simkv.core import contract
from simkv.errors import ConfigurationError, DivergenceError, StabilityError
from simkv.rng import RngStream
from simkv.schedules import LambdaSchedule, constant

DIVERGENCE_CAP = 1e12


@dataclass(frozen=True)
class SIState:
    x: np.ndarray
    y: np.ndarray
    t: float = 0.0

    @property
    def batch_shape(self):
        return np.shape(self.x)[:-1]


@dataclass(frozen=True)
class ParticleSystemState:
    xs: np.ndarray  # (N, d)
    t: float = 0.0

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim != 2 or xs.shape[0] < 1:
            raise ConfigurationError(f"particle system needs shape (N, d) with N >= 1, got {xs.shape}")
        object.__setattr__(self, "xs", xs)


@dataclass(frozen=True)
class GaussianInit:
    """Isotropic Gaussian initial law N(mean, std^2 I)."""

    mean: float | tuple = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.std < 0:
            raise ConfigurationError(f"initial std must be nonnegative, got {self.std}")


def _as_streams(rng, batch_shape):
    if isinstance(rng, RngStream):
        if batch_shape:
            raise ConfigurationError("batched state needs one RngStream per row")
        return None
    rngs = list(rng)
    if batch_shape != (len(rngs),):
        raise ConfigurationError(f"got {len(rngs)} streams for batch shape {batch_shape}")
    return rngs


def draw_normals(rng, n, d, batch_shape=()):
    """``n`` consecutive d-vectors per stream, shaped (n, *batch, d)."""
    rngs = _as_streams(rng, batch_shape)
    if rngs is None:
        return rng.normal((n, d))
    return np.stack([r.normal((n, d)) for r in rngs], axis=1)


def all_finite(x, y):
    """Fast whole-batch check; NaN fails the comparison."""
    return np.abs(x).max() <= DIVERGENCE_CAP and np.abs(y).max() <= DIVERGENCE_CAP


def diverged_rows(x, y):
    """Boolean mask over batch rows that are non-finite or beyond the cap."""
    bad_x = ~(np.abs(x) <= DIVERGENCE_CAP)
    bad_y = ~(np.abs(y) <= DIVERGENCE_CAP)
    return bad_x.any(axis=-1) | bad_y.any(axis=-1)


def _check_rate(lam, dt):
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if not lam > 0:
        raise ConfigurationError(f"lambda must be positive, got {lam}")
    if not lam * dt < 1:
        raise StabilityError(f"lambda * dt = {lam * dt:g} must be < 1 for a stable moving average")


def advance(model, x, y, lam_dt, dt, noise):
    """One Euler step with externally supplied standard normals. No checks."""
    x_new = x + contract(model.grad_ell(x), model.grad_phi(y)) * dt + (model.sigma * np.sqrt(dt)) * noise
    y_new = (1.0 - lam_dt) * y + lam_dt * model.ell(x_new)
    return x_new, y_new


def si_step(model, state, lambda_t, dt, rng, step_index=None):
    _check_rate(lambda_t, dt)
    x = model.check_x(state.x)
    y = model.check_y(state.y)
    noise = draw_normals(rng, 1, model.d, x.shape[:-1])[0]
    x_new, y_new = advance(model, x, y, lambda_t * dt, dt, noise)
    bad = diverged_rows(x_new, y_new)
    if np.any(bad):
        step = step_index if step_index is not None else "?"
        raise DivergenceError(f"state diverged at step {step} (t={state.t + dt:g})", step=step_index,
                              reps=np.flatnonzero(np.atleast_1d(bad)).tolist())
    return SIState(x_new, y_new, state.t + dt)


def init_sample(model, m0, rng):
    """X0 ~ N(mean, std^2 I), Y0 = ell(X0), t = 0."""
    rngs = None if isinstance(rng, RngStream) else list(rng)
    shape = () if rngs is None else (len(rngs),)
    mean = np.broadcast_to(np.asarray(m0.mean, dtype=float), (model.d,))
    noise = draw_normals(rng, 1, model.d, shape)[0]
    x = mean + m0.std * noise
    return SIState(x, model.ell(x), 0.0)


def point_init(model, x):
    x = model.check_x(x)
    return SIState(x.copy(), model.ell(x), 0.0)


# ---------------------------------------------------------------------------
# Recording


@dataclass
class Recorder:
    """Collects loss values every ``stride`` steps and state samples after ``burn_in``.

    Samples are taken every ``sample_stride`` steps once ``t >= burn_in``.
    Set ``sample_stride=0`` to skip samples entirely.
    """

    stride: int = 100
    sample_stride: int = 0
    burn_in: float = 0.0
    times: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    sample_times: list = field(default_factory=list)
    x_samples: list = field(default_factory=list)
    y_samples: list = field(default_factory=list)

    def __post_init__(self):
        if self.stride < 1:
            raise ConfigurationError(f"record stride must be >= 1, got {self.stride}")
        if self.sample_stride < 0:
            raise ConfigurationError(f"sample stride must be >= 0, got {self.sample_stride}")

    def wants(self, n):
        return n % self.stride == 0 or (self.sample_stride and n % self.sample_stride == 0)

    def __call__(self, n, t, model, x, y):
        if n % self.stride == 0:
            self.times.append(t)
            self.losses.append(model.phi(y))
        if self.sample_stride and n % self.sample_stride == 0 and t >= self.burn_in:
            self.sample_times.append(t)
            self.x_samples.append(x.copy())
            self.y_samples.append(y.copy())

    def as_arrays(self):
        """Loss array (n_rec, *batch); samples (n_samp, *batch, d|D)."""
        return (np.array(self.times), np.array(self.losses),
                np.array(self.sample_times), np.array(self.x_samples), np.array(self.y_samples))


@dataclass
class Trajectory:
    state: SIState
    times: np.ndarray
    losses: np.ndarray
    sample_times: np.ndarray
    x_samples: np.ndarray
    y_samples: np.ndarray
    failures: dict  # batch row -> step index at which divergence was detected


def step_rates(schedule, dt, n_steps):
    """lambda(t_n) for t_n = n * dt, n = 0..n_steps-1, as one array."""
    if n_steps == 0:
        return np.empty(0)
    if not schedule.covers((n_steps - 1) * dt):
        raise ConfigurationError(
            f"schedule of total duration {schedule.total_duration} does not cover T={n_steps * dt}"
        )
    t = np.arange(n_steps) * dt
    idx = np.searchsorted(np.array(schedule._ends), t, side="right")
    return np.array([v for _, v in schedule.segments])[idx]


def n_steps_for(T, dt):
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if T < 0:
        raise ConfigurationError(f"T must be nonnegative, got {T}")
    n = int(np.floor(T / dt + 1e-9))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigurationError(f"T={T} is not a whole number of steps of dt={dt}")
    return n


def simulate(model, schedule, init, dt, T, rng, recorder=None, chunk=2048,
             on_divergence="raise"):
    """Run the Euler scheme from ``init`` up to time ``T``.

    ``rng`` is one ``RngStream`` for an unbatched state or a list of streams,
    one per batch row. ``on_divergence="mask"`` freezes diverged rows at zero,
    reports them in ``Trajectory.failures`` and reports NaN for their records.
    """
    if isinstance(schedule, (int, float)):
        schedule = constant(schedule)
    if not isinstance(schedule, LambdaSchedule):
        raise ConfigurationError("schedule must be a LambdaSchedule or a positive number")
    if on_divergence not in ("raise", "mask"):
        raise ConfigurationError(f"on_divergence must be 'raise' or 'mask', got {on_divergence!r}")
    n_steps = n_steps_for(T, dt)
    rates = step_rates(schedule, dt, n_steps)
    if n_steps and not rates.max() * dt < 1:
        raise StabilityError(f"lambda_max * dt = {rates.max() * dt:g} must be < 1")
    recorder = recorder if recorder is not None else Recorder(stride=max(n_steps, 1))

    x = np.array(model.check_x(init.x), dtype=float)
    y = np.array(model.check_y(init.y), dtype=float)
    batch = x.shape[:-1]
    _as_streams(rng, batch)
    t0 = float(init.t)
    failures = {}
    dead = np.zeros(batch, dtype=bool)

    for start in range(0, n_steps, chunk):
        stop = min(start + chunk, n_steps)
        noise = draw_normals(rng, stop - start, model.d, batch)
        for k in range(stop - start):
            n = start + k
            x, y = advance(model, x, y, rates[n] * dt, dt, noise[k])
            if not all_finite(x, y):
                # dead rows sit at zero, so every flagged row is a new failure
                bad = diverged_rows(x, y)
                if on_divergence == "raise" or not batch:
                    raise DivergenceError(
                        f"state diverged at step {n + 1} (t={t0 + (n + 1) * dt:g})",
                        step=n + 1, reps=np.flatnonzero(np.atleast_1d(bad)).tolist())
                for row in np.flatnonzero(bad):
                    failures[int(row)] = n + 1
                dead |= bad
                x[bad] = 0.0
                y[bad] = 0.0
            if recorder.wants(n + 1):
                if dead.any():
                    xr, yr = x.copy(), y.copy()
                    xr[dead] = np.nan
                    yr[dead] = np.nan
                else:
                    xr, yr = x, y
                recorder(n + 1, t0 + (n + 1) * dt, model, xr, yr)

    if dead.any():
        x[dead] = np.nan
        y[dead] = np.nan
    state = SIState(x, y, t0 + n_steps * dt)
    times, losses, s_times, xs, ys = recorder.as_arrays()
    return Trajectory(state, times, losses, s_times, xs, ys, failures)


# ---------------------------------------------------------------------------
# N-particle baseline


def particle_step(model, state, dt, rng):
    """Every particle feels the empirical features (1/N) sum_j ell(X^j)."""
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    xs = model.check_x(state.xs)
    y_emp = model.ell(xs).mean(axis=0)
    noise = rng.normal(xs.shape)
    xs_new = xs + contract(model.grad_ell(xs), model.grad_phi(y_emp)) * dt + (model.sigma * np.sqrt(dt)) * noise
    if diverged_rows(xs_new, y_emp[None, :]).any():
        raise DivergenceError(f"particle system diverged at t={state.t + dt:g}")
    return ParticleSystemState(xs_new, state.t + dt)


def simulate_particles(model, init, dt, T, rng, sample_every=0, burn_in=0.0):
    """Iterate ``particle_step``; optionally return position snapshots after ``burn_in``."""
    n_steps = n_steps_for(T, dt)
    state = init
    snaps = []
    for n in range(1, n_steps + 1):
        state = particle_step(model, state, dt, rng)
        if sample_every and n % sample_every == 0 and state.t >= burn_in:
            snaps.append(state.xs.copy())
    return state, np.array(snaps)


# ---------------------------------------------------------------------------
# Synchronous coupling


def pair_distance(xa, ya, xb, yb, lam, L=None, c_omega=1.0, M_omega=np.inf):
    """Diagnostic distance between two coupled states.

    Without ``L``: |X - X'| + |Y - Y'|. With ``L``:
    |X - X'| + (2L / lambda) min(c_omega |Y - Y'|, M_omega). Neither is the
    Wasserstein metric between occupation measures; the feature vector alone
    cannot recover it.
    """
    dx = np.linalg.norm(xa - xb, axis=-1)
    dy = np.linalg.norm(ya - yb, axis=-1)
    if L is None:
        return dx + dy
    return dx + (2.0 * L / lam) * np.minimum(c_omega * dy, M_omega)


def coupled_pair_run(model, schedule, init_a, init_b, dt, T, rng, L=None, c_omega=1.0,
                     M_omega=np.inf, every=1):
    """Advance two copies with identical Gaussian draws.

    Returns ``(times, distances)`` with the initial distance first; distances
    have shape (n_records, *batch).
    """
    if isinstance(schedule, (int, float)):
        schedule = constant(schedule)
    n_steps = n_steps_for(T, dt)
    rates = step_rates(schedule, dt, n_steps)
    if n_steps and not rates.max() * dt < 1:
        raise StabilityError(f"lambda_max * dt = {rates.max() * dt:g} must be < 1")
    xa, ya = model.check_x(init_a.x), model.check_y(init_a.y)
    xb, yb = model.check_x(init_b.x), model.check_y(init_b.y)
    if xa.shape != xb.shape or ya.shape != yb.shape:
        raise ConfigurationError("coupled states must have identical shapes")
    batch = xa.shape[:-1]
    lam0 = schedule.segments[0][1]
    times = [float(init_a.t)]
    dists = [pair_distance(xa, ya, xb, yb, lam0, L, c_omega, M_omega)]
    for start in range(0, n_steps, 2048):
        stop = min(start + 2048, n_steps)
        noise = draw_normals(rng, stop - start, model.d, batch)
        for k in range(stop - start):
            n = start + k
            lam = rates[n]
            xa, ya = advance(model, xa, ya, lam * dt, dt, noise[k])
            xb, yb = advance(model, xb, yb, lam * dt, dt, noise[k])
            if diverged_rows(xa, ya).any() or diverged_rows(xb, yb).any():
                raise DivergenceError(f"coupled pair diverged at step {n + 1}", step=n + 1)
            if (n + 1) % every == 0:
                times.append(float(init_a.t) + (n + 1) * dt)
                dists.append(pair_distance(xa, ya, xb, yb, lam, L, c_omega, M_omega))
    return np.array(times), np.array(dists)

