"""Quadrature grids and discretized integral operators on ``[0, A]``.

Every operating characteristic of the SR-type statistics is a solution of
an integral equation whose kernel is the one-step transition density of
``R_{n+1} = (1 + R_n) Lambda_{n+1}``::

    k_j(x, y) = d/dx F_j(x / (1 + y)) = pdf_j(x / (1 + y)) / (1 + y)

(``y`` the current state, ``x`` the next one, ``F_j`` the cdf of the
likelihood ratio under regime ``j``).

Orientation used throughout the package: ``matrix[j, i] = w_i k(x_i, y_j)``
so that ``(T u)(y_j) = sum_i matrix[j, i] u(x_i)`` acts on functions of the
*starting* state, and ``matrix.T`` acts on measures (point masses on the
nodes).  Off-grid values are obtained by Nystrom interpolation through
:meth:`DiscretizedOperator.row`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .exceptions import ConfigurationError, NumericalError, UnsupportedModelError
from .model import ChangepointModel

MIN_NODES = 64
PANEL_ORDER = 8
RCOND_MIN = 1e-12  # reciprocal 1-norm condition number below which I - T counts as singular


@dataclass(frozen=True)
class Grid:
    """Composite Gauss-Legendre rule on ``[0, upper]``."""

    upper: float
    nodes: np.ndarray
    weights: np.ndarray
    breakpoints: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.size

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def gauss_legendre_panels(breakpoints: np.ndarray, order: int = PANEL_ORDER):
    """Nodes and weights of an ``order``-point Gauss-Legendre rule on each panel."""
    t, w = np.polynomial.legendre.leggauss(order)
    lo = breakpoints[:-1, None]
    hi = breakpoints[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (half * t + 0.5 * (hi + lo)).ravel()
    weights = (half * w).ravel()
    return nodes, weights


def build_grid(A: float, n: int = 2048, order: int = PANEL_ORDER) -> Grid:
    """Quadrature grid with about ``n`` nodes on ``[0, A]``.

    Panels are equally spaced in ``log(1 + x)``: the transition kernel out
    of state ``y`` varies on the scale ``1 + y``, so fixed-width panels
    under-resolve the region near zero once ``A`` is in the thousands.
    ``n`` is rounded up to a multiple of ``order``.
    """
    if not A > 0 or not math.isfinite(A):
        raise ConfigurationError(f"threshold must be positive and finite, got {A!r}")
    if n < MIN_NODES:
        raise ConfigurationError(f"grid needs at least {MIN_NODES} nodes, got {n}")
    panels = -(-int(n) // order)
    breaks = np.expm1(np.linspace(0.0, math.log1p(A), panels + 1))
    breaks[0], breaks[-1] = 0.0, A
    nodes, weights = gauss_legendre_panels(breaks, order)
    return Grid(upper=float(A), nodes=nodes, weights=weights, breakpoints=breaks)


def transition_density(model: ChangepointModel, regime: str, x, y) -> np.ndarray:
    """``k(x, y)`` as an array of shape ``(len(y), len(x))``."""
    pdf = model.pdf(regime)
    if pdf is None or not model.smooth_kernel:
        raise UnsupportedModelError(
            f"model {model.name!r} has no smooth likelihood-ratio density under {regime!r}"
        )
    x = np.atleast_1d(np.asarray(x, dtype=float))
    scale = 1.0 + np.atleast_1d(np.asarray(y, dtype=float))[:, None]
    return pdf(x[None, :] / scale) / scale


@dataclass(frozen=True, eq=False)
class DiscretizedOperator:
    """Nystrom discretization of one transition kernel on a grid."""

    grid: Grid
    matrix: np.ndarray
    model: ChangepointModel
    regime: str

    def row(self, y) -> np.ndarray:
        """Quadrature row ``w_i k(x_i, y)``; 1-D for scalar ``y``, 2-D otherwise."""
        k = transition_density(self.model, self.regime, self.grid.nodes, y) * self.grid.weights
        return k[0] if np.ndim(y) == 0 else k

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u

    def apply_to_measure(self, masses: np.ndarray) -> np.ndarray:
        return self.matrix.T @ masses

    @cached_property
    def _lu(self):
        system = np.eye(self.grid.size) - self.matrix
        lu, piv = linalg.lu_factor(system, check_finite=False)
        rcond, _ = lapack.dgecon(lu, np.abs(system).sum(axis=0).max(), norm="1")
        return lu, piv, float(rcond)


def discretize_kernel(model: ChangepointModel, regime: str, grid: Grid) -> DiscretizedOperator:
    """Build the operator ``T`` for ``k_regime`` on ``grid`` (see module doc)."""
    k = transition_density(model, regime, grid.nodes, grid.nodes)
    matrix = k * grid.weights[None, :]
    matrix.setflags(write=False)
    return DiscretizedOperator(grid=grid, matrix=matrix, model=model, regime=regime)


def spectral_radius_estimate(op: DiscretizedOperator, iterations: int = 200) -> float:
    v = np.ones(op.grid.size)
    rho = 0.0
    for _ in range(iterations):
        w = np.abs(op.apply(v))
        norm = w.max()
        if norm == 0:
            return 0.0
        rho, v = norm / v.max(), w / norm
    return float(rho)


def solve_fredholm(op: DiscretizedOperator, rhs) -> np.ndarray:
    """Solve ``u = rhs + T u`` on the grid by a dense LU solve.

    ``rhs`` may be a scalar (constant function) or an array over the nodes.
    """
    b = np.broadcast_to(np.asarray(rhs, dtype=float), (op.grid.size,)).copy()
    lu, piv, rcond = op._lu
    if not rcond > RCOND_MIN:
        raise NumericalError(
            f"I - T is numerically singular (rcond {rcond:.3g}); "
            f"estimated spectral radius {spectral_radius_estimate(op):.6g}"
        )
    with np.errstate(all="ignore"):
        u = linalg.lu_solve((lu, piv), b, check_finite=False)
    scale = np.abs(u).max() if u.size else 0.0
    if not np.all(np.isfinite(u)):
        raise NumericalError(
            f"I - T is singular; estimated spectral radius {spectral_radius_estimate(op):.6g}"
        )
    resid = np.abs(u - b - op.apply(u)).max()
    if resid > 1e-10 * max(scale, 1.0):
        raise NumericalError(
            f"Fredholm residual {resid:.3g} too large; "
            f"estimated spectral radius {spectral_radius_estimate(op):.6g}"
        )
    return u


@dataclass(frozen=True)
class EigenPair:
    eigenvalue: float
    density: np.ndarray  # eigen-density at the nodes, integrates to one
    masses: np.ndarray  # density * weights; sums to one
    iterations: int
    residual: float


def leading_eigenpair(
    op: DiscretizedOperator, tol: float = 1e-12, max_iter: int = 100_000
) -> EigenPair:
    """Perron eigenvalue and eigen-measure of ``T`` acting on measures.

    Power iteration on the node masses, renormalised to total mass one,
    until successive eigenvalue estimates differ by less than ``tol``.
    """
    m = op.grid.weights / op.grid.weights.sum()
    lam_old = np.nan
    for it in range(1, max_iter + 1):
        nxt = op.apply_to_measure(m)
        lam = float(nxt.sum())
        if lam <= 0:
            raise NumericalError("operator annihilated the iterate; no positive eigenvalue")
        m = nxt / lam
        if abs(lam - lam_old) < tol:
            break
        lam_old = lam
    else:
        resid = float(np.abs(op.apply_to_measure(m) - lam * m).sum())
        raise NumericalError(f"power iteration did not converge in {max_iter} steps (residual {resid:.3g})")
    resid = float(np.abs(op.apply_to_measure(m) - lam * m).sum())
    return EigenPair(
        eigenvalue=lam,
        density=m / op.grid.weights,
        masses=m,
        iterations=it,
        residual=resid,
    )
