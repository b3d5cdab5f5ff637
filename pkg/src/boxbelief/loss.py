"""Laplace uncertainty modeling of corner components.

Every corner component is modeled as an independent univariate Laplace
variable with density p(x | mu, b) = exp(-|x - mu| / b) / (2b), whose
variance is 2 b^2.  The per-component regression loss is the negative log
likelihood ln(2b) + |x - mu| / b, and the ensemble loss of a box is the sum
of all 24 component losses, so minimizing it maximizes the product of the
component densities.

The diversity b is taken directly (no log-parameterization is assumed) and
must be at least `B_MIN`; a trainer that prefers predicting log b can
exponentiate before calling into this module.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, InvalidInputError
from .geometry import BoxParams, CornerSet, corner_jacobian, corners_from_box

#: Lower bound on the Laplace diversity (meters).
B_MIN = 1e-3


@dataclass(frozen=True)
class LaplaceParam:
    """One Laplace component: predicted value mu and diversity b (meters)."""

    mu: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.b)):
            raise InvalidInputError(f"Laplace parameters must be finite: {self}")
        if self.b < B_MIN:
            raise InvalidInputError(f"diversity b={self.b} below floor {B_MIN}")

    def variance(self) -> float:
        return 2.0 * self.b * self.b


@dataclass(frozen=True, eq=False)
class CornerBelief:
    """Per-corner, per-component Laplace parameters for one box.

    `mu` and `b` are (8, 3) arrays indexed by (corner, component) with the
    corner bit-code ordering and components (x, y, z).
    """

    mu: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        b = np.array(self.b, dtype=float)
        if mu.shape != (8, 3) or b.shape != (8, 3):
            raise InvalidInputError(
                f"belief grids must have shape (8, 3), got {mu.shape} and {b.shape}"
            )
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(b))):
            raise InvalidInputError("belief grids must be finite")
        if np.any(b < B_MIN):
            raise InvalidInputError(
                f"all diversities must be >= {B_MIN}, min was {b.min()}"
            )
        mu.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_box(cls, box: BoxParams, b) -> "CornerBelief":
        """Belief whose means are the corners of `box`; b broadcasts to (8, 3)."""
        b_grid = np.broadcast_to(np.asarray(b, dtype=float), (8, 3))
        return cls(mu=corners_from_box(box).corners, b=b_grid)

    def param(self, corner: int, component: int) -> LaplaceParam:
        return LaplaceParam(float(self.mu[corner, component]), float(self.b[corner, component]))

    @property
    def variances(self) -> np.ndarray:
        """Componentwise variances 2 b^2, shape (8, 3)."""
        return 2.0 * self.b**2

    def corner_set(self) -> CornerSet:
        """The predicted corners (the belief means)."""
        return CornerSet(self.mu)


@dataclass(frozen=True, eq=False)
class LossValue:
    """Ensemble loss: the 8x3 per-component grid and its total."""

    per_component: np.ndarray
    total: float = field(init=False)

    def __post_init__(self):
        per = np.array(self.per_component, dtype=float)
        if per.shape != (8, 3):
            raise InvalidInputError(f"per-component grid must be (8, 3), got {per.shape}")
        per.setflags(write=False)
        object.__setattr__(self, "per_component", per)
        object.__setattr__(self, "total", float(per.sum()))


def laplace_density(x, p: LaplaceParam):
    """Laplace density exp(-|x - mu| / b) / (2b); accepts scalars or arrays."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-np.abs(x - p.mu) / p.b) / (2.0 * p.b)
    return float(out) if out.ndim == 0 else out


def component_nll(x, p: LaplaceParam):
    """Negative log likelihood ln(2b) + |x - mu| / b of one component."""
    x = np.asarray(x, dtype=float)
    out = math.log(2.0 * p.b) + np.abs(x - p.mu) / p.b
    return float(out) if out.ndim == 0 else out


def ensemble_loss(label: CornerSet, belief: CornerBelief) -> LossValue:
    """Sum of the 24 component NLLs of the label corners under the belief."""
    residual = np.abs(label.corners - belief.mu)
    return LossValue(per_component=np.log(2.0 * belief.b) + residual / belief.b)


def ensemble_loss_grad(
    label: CornerSet, belief: CornerBelief
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the ensemble total w.r.t. every mu and b.

    d/dmu = -sign(x - mu) / b with the subgradient 0 at x = mu, and
    d/db = 1/b - |x - mu| / b^2.  Both returned as (8, 3) grids.
    """
    delta = label.corners - belief.mu
    d_mu = -np.sign(delta) / belief.b
    d_b = 1.0 / belief.b - np.abs(delta) / belief.b**2
    return d_mu, d_b


def box_loss_grad(
    label: CornerSet, predicted_box: BoxParams, diversities
) -> np.ndarray:
    """Gradient of the ensemble loss w.r.t. the 7 predicted box parameters.

    Chains the corner-mean gradients through the corner Jacobian of the
    predicted box: returns J^T vec(dL/dmu), ordered [x, y, z, h, w, l, psi].
    """
    belief = CornerBelief(
        mu=corners_from_box(predicted_box).corners,
        b=np.broadcast_to(np.asarray(diversities, dtype=float), (8, 3)),
    )
    d_mu, _ = ensemble_loss_grad(label, belief)
    return corner_jacobian(predicted_box).T @ d_mu.reshape(24)


def fit_laplace_mle(samples) -> LaplaceParam:
    """Closed-form Laplace MLE: mu is the sample median, b the mean absolute
    deviation about it, floored at `B_MIN`."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 1:
        raise InvalidInputError(f"samples must be one-dimensional, got shape {arr.shape}")
    if arr.size < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("samples must be finite")
    mu = float(np.median(arr))
    b = float(np.mean(np.abs(arr - mu)))
    return LaplaceParam(mu, max(b, B_MIN))
