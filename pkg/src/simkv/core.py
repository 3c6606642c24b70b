"""Cylindrical mean-field functionals F(m) = phi(<ell, m>).

A model is described by a feature map ``ell: R^d -> R^D`` and an outer
function ``phi: R^D -> R`` together with their analytic gradients. Everything
the samplers need (drift, Gibbs potential, loss) is derived from these four
callables.

All callables broadcast over leading batch axes: ``ell`` maps ``(..., d)`` to
``(..., D)``, ``grad_ell`` maps ``(..., d)`` to ``(..., D, d)``, ``phi`` maps
``(..., D)`` to ``(...)`` and ``grad_phi`` maps ``(..., D)`` to ``(..., D)``.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from simkv.errors import ConfigurationError

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CylindricalModel:
    d: int
    D: int
    ell: ArrayFn
    grad_ell: ArrayFn
    phi: ArrayFn
    grad_phi: ArrayFn
    sigma: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if int(self.d) < 1 or int(self.D) < 1:
            raise ConfigurationError(f"dimensions must be positive, got d={self.d}, D={self.D}")
        if not self.sigma > 0:
            raise ConfigurationError(f"sigma must be positive, got {self.sigma}")

    def check_x(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.d:
            raise ConfigurationError(f"{self.name}: expected x with trailing dimension {self.d}, got shape {x.shape}")
        return x

    def check_y(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim == 0 or y.shape[-1] != self.D:
            raise ConfigurationError(f"{self.name}: expected y with trailing dimension {self.D}, got shape {y.shape}")
        return y


def contract(jac, g):
    """Return ``-jac^T g`` batched over leading axes.

    Plain (non-optimized) einsum never dispatches to BLAS, so every batch row
    is reduced in the same order whatever the batch size.
    """
    return -np.einsum("...ij,...i->...j", jac, g)


def drift(model, y, x):
    """Mean-field drift -grad_phi(y) . grad_ell(x) at features ``y`` and position ``x``."""
    x = model.check_x(x)
    y = model.check_y(y)
    return contract(model.grad_ell(x), model.grad_phi(y))


def gibbs_potential(model, y, x):
    """Potential V(y, x) = grad_phi(y) . ell(x); its negative x-gradient is the drift."""
    x = model.check_x(x)
    y = model.check_y(y)
    return (model.grad_phi(y) * model.ell(x)).sum(axis=-1)


def loss(model, y):
    return model.phi(model.check_y(y))
