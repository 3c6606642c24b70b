"""Concrete cylindrical models.

* ``gaussian_model``: ell(x) = (x, |x|^2/2), phi(y0, y1) = |y0|^2/2 + y1.
  Exactly solvable; the mean-field invariant measure is N(0, 1/2).
* ``curie_weiss_model``: ell(x) = (ell0(x), x^2/2), phi(y0, y1) = -y0^2/2 + y1
  with ell0(x) = alpha * tanh(beta * x).
* ``nnet_model``: a single neuron x = (c, a, b) of a two-layer network with
  clamped output weight; features are the residuals on a fixed dataset.
"""

import csv
from dataclasses import dataclass

import numpy as np

from simkv.core import CylindricalModel
from simkv.errors import ConfigurationError


# ---------------------------------------------------------------------------
# Gaussian


@dataclass(frozen=True)
class GaussianModelSpec:
    d: int = 1


def gaussian_model(spec):
    d = int(spec.d)
    if d < 1:
        raise ConfigurationError(f"gaussian model needs d >= 1, got {d}")
    eye = np.eye(d)

    def ell(x):
        out = np.empty(x.shape[:-1] + (d + 1,))
        out[..., :d] = x
        out[..., d] = 0.5 * (x * x).sum(axis=-1)
        return out

    def grad_ell(x):
        jac = np.empty(x.shape[:-1] + (d + 1, d))
        jac[..., :d, :] = eye
        jac[..., d, :] = x
        return jac

    def phi(y):
        y0 = y[..., :d]
        return 0.5 * (y0 * y0).sum(axis=-1) + y[..., d]

    def grad_phi(y):
        g = np.array(y, dtype=float, copy=True)
        g[..., d] = 1.0
        return g

    return CylindricalModel(d=d, D=d + 1, ell=ell, grad_ell=grad_ell, phi=phi,
                            grad_phi=grad_phi, sigma=1.0, name="gaussian")


# ---------------------------------------------------------------------------
# Curie-Weiss


@dataclass(frozen=True)
class CurieWeissSpec:
    """ell0(x) = alpha * tanh(beta * x); odd, bounded by alpha, increasing."""

    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ConfigurationError(f"curie_weiss needs alpha, beta > 0, got {self.alpha}, {self.beta}")

    @property
    def sup_norm(self):
        return float(self.alpha)

    @property
    def lipschitz(self):
        """sup |ell0'|."""
        return float(self.alpha * self.beta)

    def ell0(self, x):
        return self.alpha * np.tanh(self.beta * np.asarray(x, dtype=float))

    def dell0(self, x):
        th = np.tanh(self.beta * np.asarray(x, dtype=float))
        return self.alpha * self.beta * (1.0 - th * th)


def curie_weiss_model(spec):
    def ell(x):
        return np.concatenate([spec.ell0(x), 0.5 * x * x], axis=-1)

    def grad_ell(x):
        return np.stack([spec.dell0(x), x], axis=-2)

    def phi(y):
        return -0.5 * y[..., 0] ** 2 + y[..., 1]

    def grad_phi(y):
        g = np.empty(np.shape(y))
        g[..., 0] = -y[..., 0]
        g[..., 1] = 1.0
        return g

    return CylindricalModel(d=1, D=2, ell=ell, grad_ell=grad_ell, phi=phi,
                            grad_phi=grad_phi, sigma=1.0, name="curie_weiss")


# ---------------------------------------------------------------------------
# Two-layer network


def sigmoid(t):
    """Logistic function, evaluated without overflow for large |t|."""
    t = np.asarray(t, dtype=float)
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def truncate(c, bound):
    return np.clip(c, -bound, bound)


def truncate_grad(c, bound):
    # a.e. derivative of the clamp; the boundary |c| == bound counts as inside
    return (np.abs(c) <= bound).astype(float)


@dataclass(frozen=True, eq=False)
class NNetSpec:
    z: np.ndarray  # (K, d_in)
    labels: np.ndarray  # (K,)
    L_trunc: float = 30.0
    sigma2_half: float = 0.05
    gamma: float = 0.0025

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.z, dtype=float))
        labels = np.asarray(self.labels, dtype=float).ravel()
        if z.shape[0] == 0 or labels.size == 0:
            raise ConfigurationError("nnet model needs a nonempty dataset")
        if z.shape[0] != labels.size:
            raise ConfigurationError(f"dataset has {z.shape[0]} inputs but {labels.size} labels")
        for name in ("L_trunc", "sigma2_half", "gamma"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"nnet {name} must be positive, got {getattr(self, name)}")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "labels", labels)

    @property
    def K(self):
        return self.labels.size

    @property
    def d_in(self):
        return self.z.shape[1]

    @property
    def sigma(self):
        return float(np.sqrt(2.0 * self.sigma2_half))


def preactivation(a, b, z):
    # explicit sum instead of matmul: BLAS kernels may reorder by batch size
    return (a[..., None, :] * z).sum(axis=-1) + b[..., None]


def neuron_output(x, z, bound):
    """f(x; z) = tau(c) * sigmoid(a . z + b) for every row of ``z``; shape (..., K)."""
    c, a, b = x[..., 0], x[..., 1:-1], x[..., -1]
    return truncate(c, bound)[..., None] * sigmoid(preactivation(a, b, z))


def nnet_model(spec):
    z, labels, bound = spec.z, spec.labels, float(spec.L_trunc)
    K, d_in = spec.K, spec.d_in
    d = d_in + 2
    sigma = spec.sigma
    decay = sigma**2 * spec.gamma  # sigma^2 * gamma

    def ell(x):
        out = np.empty(x.shape[:-1] + (K + 1,))
        out[..., 0] = (x * x).sum(axis=-1)
        out[..., 1:] = neuron_output(x, z, bound) - labels
        return out

    def grad_ell(x):
        c, a, b = x[..., 0], x[..., 1:-1], x[..., -1]
        act = sigmoid(preactivation(a, b, z))  # (..., K)
        tc = truncate(c, bound)[..., None]
        slope = tc * act * (1.0 - act)
        jac = np.empty(x.shape[:-1] + (K + 1, d))
        jac[..., 0, :] = 2.0 * x
        jac[..., 1:, 0] = truncate_grad(c, bound)[..., None] * act
        jac[..., 1:, 1:-1] = slope[..., None] * z
        jac[..., 1:, -1] = slope
        return jac

    def phi(y):
        r = y[..., 1:]
        return 0.5 * decay * y[..., 0] + (r * r).sum(axis=-1) / (2.0 * K)

    def grad_phi(y):
        g = np.empty(np.shape(y))
        g[..., 0] = 0.5 * decay
        g[..., 1:] = y[..., 1:] / K
        return g

    return CylindricalModel(d=d, D=K + 1, ell=ell, grad_ell=grad_ell, phi=phi,
                            grad_phi=grad_phi, sigma=sigma, name="nnet")


# ---------------------------------------------------------------------------
# Dataset


def target_function(z):
    z = np.asarray(z, dtype=float)
    return np.sin(2 * np.pi * z[..., 0]) + np.cos(2 * np.pi * z[..., 1])


def make_sin_cos_dataset(K, rng):
    """K inputs uniform on the unit square with labels sin(2 pi z1) + cos(2 pi z2)."""
    K = int(K)
    if K < 1:
        raise ConfigurationError(f"dataset size must be >= 1, got {K}")
    z = rng.uniform((K, 2))
    return z, target_function(z)


def write_dataset(path, z, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z1", "z2", "label"])
        for (z1, z2), lab in zip(z, labels):
            w.writerow([repr(float(z1)), repr(float(z2)), repr(float(lab))])


def read_dataset(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["z1", "z2", "label"]:
            raise ConfigurationError(f"{path}: expected header z1,z2,label, got {reader.fieldnames}")
        rows = [(float(r["z1"]), float(r["z2"]), float(r["label"])) for r in reader]
    if not rows:
        raise ConfigurationError(f"{path}: dataset is empty")
    arr = np.array(rows)
    return arr[:, :2], arr[:, 2]
