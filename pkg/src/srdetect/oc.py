"""Exact operating characteristics from integral equations.

For a threshold ``A`` and head start ``r`` the package solves

* ``phi_j(r) = 1 + int_0^A phi_j(x) k_j(x, r) dx``: ARL to false alarm
  (``j = pre``) and ``E_0 T`` (``j = post``);
* ``delta_nu = T delta_{nu-1}``, ``delta_0 = phi_post`` and
  ``p_nu = T p_{nu-1}``, ``p_0 = 1``: conditional delays
  ``E_nu(T - nu | T > nu) = delta_nu(r) / p_nu(r)``;
* ``psi = phi_post + T psi``: the lower bound ``J(T_A) = psi(0) / phi_pre(0)``;
* the quasi-stationary law ``Q_A`` as the Perron eigen-measure of ``T``.

``T`` is always the pre-change operator on ``[0, A]`` unless noted.
Results for a ``(model, A, n)`` triple are cached.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np
from scipy import optimize

from .detectors import SR, SR_R, SRP, Procedure
from .exceptions import CalibrationError, ConfigurationError
from .model import POST, PRE, ChangepointModel
from .numerics import (
    DiscretizedOperator,
    Grid,
    build_grid,
    discretize_kernel,
    leading_eigenpair,
    solve_fredholm,
)

DEFAULT_GRID_N = 2048
DEFAULT_NU_MAX = 200
STATIONARY_RTOL = 1e-6
STATIONARY_RUN = 5


class GridFunction:
    """Solution of ``u = rhs + T u`` known at the nodes, evaluable anywhere.

    Off-grid values use the Nystrom formula ``u(r) = rhs(r) + row(r) . u``,
    which is the natural interpolant of the discretized equation.
    """

    def __init__(self, op: DiscretizedOperator, values: np.ndarray, rhs: Callable | float):
        self.op = op
        self.values = values
        self._rhs = rhs

    @property
    def grid(self) -> Grid:
        return self.op.grid

    def rhs(self, r):
        if callable(self._rhs):
            return self._rhs(r)
        return np.full(np.shape(r), float(self._rhs)) if np.ndim(r) else float(self._rhs)

    def __call__(self, r):
        r_arr = np.asarray(r, dtype=float)
        if np.any(r_arr < 0) or np.any(r_arr > self.grid.upper):
            raise ConfigurationError("evaluation point must lie in [0, A]")
        out = self.rhs(r_arr) + self.op.row(r_arr) @ self.values
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class QuasiStationary:
    """Quasi-stationary distribution ``Q_A`` of the SR statistic."""

    threshold: float
    eigenvalue: float
    grid: Grid
    density: np.ndarray
    masses: np.ndarray
    mean: float
    model: ChangepointModel = field(repr=False)
    residual: float = 0.0

    def cdf(self, x):
        """``Q_A(x)`` from the eigen-equation ``lambda Q_A(x) = int F_pre(x/(1+y)) dQ_A(y)``."""
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        scale = 1.0 / (1.0 + self.grid.nodes[None, :])
        out = np.empty(x_arr.shape)
        for i in range(0, x_arr.size, 4096):  # bounded memory for long inputs
            inner = self.model.cdf_lr_pre(np.clip(x_arr[i:i + 4096], 0.0, None)[:, None] * scale)
            out[i:i + 4096] = inner @ self.masses
        out = np.clip(out / self.eigenvalue, 0.0, 1.0)
        out = np.where(x_arr < 0, 0.0, np.where(x_arr >= self.threshold, 1.0, out))
        return float(out[0]) if np.ndim(x) == 0 else out

    @cached_property
    def cdf_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Monotone ``(x, Q_A(x))`` table over 0, the nodes and ``A``."""
        xs = np.concatenate(([0.0], self.grid.nodes, [self.threshold]))
        cdf = np.maximum.accumulate(self.cdf(xs))
        cdf[0], cdf[-1] = 0.0, 1.0
        return xs, cdf

    def integrate(self, values: np.ndarray) -> float:
        """``int u dQ_A`` for a function known at the nodes."""
        return float(self.masses @ values)


@dataclass(frozen=True)
class DelayCurve:
    delays: np.ndarray  # E_nu(T - nu | T > nu), nu = 0..len-1
    survival: np.ndarray  # P_inf(T > nu)
    add_infinity: float
    stationary_from: int | None  # first nu of the stationary run, None if not reached
    truncated: bool = False


@dataclass(frozen=True)
class OcResult:
    procedure: str
    threshold: float
    head_start: float | None
    arl_false_alarm: float
    delay_curve: np.ndarray
    survival: np.ndarray
    sadd: float
    add_infinity: float
    argmax_kind: str
    lower_bound: float | None = None
    detection_zero: float | None = None  # E_0 T


class _Workspace:
    """Lazily solved equations for one ``(model, A, n)``."""

    def __init__(self, model: ChangepointModel, A: float, n: int):
        self.model = model
        self.A = float(A)
        self.grid = build_grid(A, n)

    @cached_property
    def pre(self) -> DiscretizedOperator:
        return discretize_kernel(self.model, PRE, self.grid)

    @cached_property
    def post(self) -> DiscretizedOperator:
        return discretize_kernel(self.model, POST, self.grid)

    @cached_property
    def phi_pre(self) -> GridFunction:
        return GridFunction(self.pre, solve_fredholm(self.pre, 1.0), 1.0)

    @cached_property
    def phi_post(self) -> GridFunction:
        return GridFunction(self.post, solve_fredholm(self.post, 1.0), 1.0)

    @cached_property
    def psi(self) -> GridFunction:
        rhs = self.phi_post.values
        return GridFunction(self.pre, solve_fredholm(self.pre, rhs), self.phi_post)

    @cached_property
    def qsd(self) -> QuasiStationary:
        pair = leading_eigenpair(self.pre)
        return QuasiStationary(
            threshold=self.A,
            eigenvalue=pair.eigenvalue,
            grid=self.grid,
            density=pair.density,
            masses=pair.masses,
            mean=float(pair.masses @ self.grid.nodes),
            model=self.model,
            residual=pair.residual,
        )


@lru_cache(maxsize=6)
def _workspace(model: ChangepointModel, A: float, n: int) -> _Workspace:
    return _Workspace(model, A, n)


def _ws(model, A, n) -> _Workspace:
    if not A > 0:
        raise ConfigurationError(f"threshold must be positive, got {A!r}")
    return _workspace(model, float(A), int(n))


def _check_head_start(r: float, A: float) -> None:
    if not 0 <= r < A:
        raise ConfigurationError(f"head start must satisfy 0 <= r < A (r={r!r}, A={A!r})")


def arl_false_alarm_curve(model: ChangepointModel, A: float, n: int = DEFAULT_GRID_N) -> GridFunction:
    """``phi_inf(r) = E_inf T_A^r`` as a function of the head start."""
    return _ws(model, A, n).phi_pre


def post_change_arl_curve(model: ChangepointModel, A: float, n: int = DEFAULT_GRID_N) -> GridFunction:
    """``phi_0(r) = E_0 T_A^r``."""
    return _ws(model, A, n).phi_post


def quasi_stationary(model: ChangepointModel, A: float, n: int = DEFAULT_GRID_N) -> QuasiStationary:
    return _ws(model, A, n).qsd


def lower_bound(model: ChangepointModel, A: float, n: int = DEFAULT_GRID_N) -> float:
    """``J(T_A) = psi(0) / phi_inf(0)`` for the SR procedure at threshold ``A``."""
    ws = _ws(model, A, n)
    return ws.psi(0.0) / ws.phi_pre(0.0)


def _stationary_index(values: list[float]) -> int | None:
    if len(values) < STATIONARY_RUN + 1:
        return None
    tail = np.asarray(values[-(STATIONARY_RUN + 1):])
    rel = np.abs(np.diff(tail)) / np.abs(tail[1:])
    if np.all(rel < STATIONARY_RTOL):
        return len(values) - STATIONARY_RUN - 1
    return None


def _iterate_delays(ws: _Workspace, start: Callable[[np.ndarray], float], delta0: float, nu_max: int) -> DelayCurve:
    """Run the delta/p recursions, reading them out through ``start``.

    ``start`` maps a node vector ``u_{nu-1}`` to the value at the initial
    state after one more step (a Nystrom row for SR-r, a ``Q_A`` average
    composed with ``T`` for SRP).
    """
    if nu_max < 1:
        raise ConfigurationError("nu_max must be at least 1")
    d = ws.phi_post.values.copy()
    p = np.ones(ws.grid.size)
    delays, surv = [delta0], [1.0]
    stationary, truncated = None, False
    for _ in range(nu_max):
        dv, pv = start(d), start(p)
        if pv < 1e-300:
            warnings.warn("survival probability underflow; delay curve truncated", RuntimeWarning)
            truncated = True
            break
        delays.append(dv / pv)
        surv.append(pv)
        stationary = _stationary_index(delays)
        if stationary is not None:
            break
        d, p = ws.pre.apply(d), ws.pre.apply(p)
    return DelayCurve(
        delays=np.asarray(delays),
        survival=np.asarray(surv),
        add_infinity=float(delays[-1]),
        stationary_from=stationary,
        truncated=truncated,
    )


def delay_curve(
    model: ChangepointModel, A: float, r: float, nu_max: int = DEFAULT_NU_MAX, n: int = DEFAULT_GRID_N
) -> DelayCurve:
    """Conditional delays of SR-r at threshold ``A`` for ``nu = 0, 1, ...``.

    Iteration stops early once :data:`STATIONARY_RUN` successive values agree
    to :data:`STATIONARY_RTOL`; the last value is reported as ``ADD_inf``.
    """
    _check_head_start(r, A)
    ws = _ws(model, A, n)
    row = ws.pre.row(float(r))
    return _iterate_delays(ws, lambda u: float(row @ u), ws.phi_post(float(r)), nu_max)


def srp_delay_curve(
    model: ChangepointModel, A: float, nu_max: int = DEFAULT_NU_MAX, n: int = DEFAULT_GRID_N
) -> DelayCurve:
    """Conditional delays of SRP, obtained by mixing SR-r curves over ``Q_A``."""
    ws = _ws(model, A, n)
    q = ws.qsd
    masses_next = ws.pre.apply_to_measure(q.masses)  # one step of the chain started at Q_A
    return _iterate_delays(ws, lambda u: float(masses_next @ u), q.integrate(ws.phi_post.values), nu_max)


def _argmax_kind(curve: DelayCurve) -> tuple[float, str]:
    values = curve.delays
    best = float(max(values.max(), curve.add_infinity))
    tol = 1e-9 * best
    if curve.stationary_from is not None and curve.add_infinity >= best - tol:
        return best, "at_infinity"
    if values[0] >= best - tol:
        return best, "at_zero"
    if curve.add_infinity >= best - tol:
        return best, "at_infinity"
    return best, "interior"


def sadd(
    model: ChangepointModel, A: float, r: float, nu_max: int = DEFAULT_NU_MAX, n: int = DEFAULT_GRID_N
) -> tuple[float, str]:
    """Supremum of the SR-r delay curve and where it is attained."""
    return _argmax_kind(delay_curve(model, A, r, nu_max, n))


def srp_characteristics(
    model: ChangepointModel, A: float, nu_max: int = DEFAULT_NU_MAX, n: int = DEFAULT_GRID_N
) -> OcResult:
    ws = _ws(model, A, n)
    q = ws.qsd
    curve = srp_delay_curve(model, A, nu_max, n)
    e0 = q.integrate(ws.phi_post.values)
    return OcResult(
        procedure=SRP,
        threshold=float(A),
        head_start=None,
        arl_false_alarm=q.integrate(ws.phi_pre.values),
        delay_curve=curve.delays,
        survival=curve.survival,
        sadd=e0,  # equalizer: every conditional delay equals E_0 T
        add_infinity=curve.add_infinity,
        argmax_kind="at_infinity" if curve.add_infinity >= e0 else "at_zero",
        detection_zero=e0,
    )


def operating_characteristics(
    model: ChangepointModel,
    procedure: Procedure,
    A: float,
    nu_max: int = DEFAULT_NU_MAX,
    n: int = DEFAULT_GRID_N,
) -> OcResult:
    """Full :class:`OcResult` for SR, SR-r or SRP at threshold ``A``."""
    if procedure.kind == SRP:
        return srp_characteristics(model, A, nu_max, n)
    ws = _ws(model, A, n)
    if procedure.kind == SR:
        r = 0.0
    elif procedure.head_start == "mu_A":
        r = ws.qsd.mean
    else:
        r = float(procedure.head_start)
    _check_head_start(r, A)
    curve = delay_curve(model, A, r, nu_max, n)
    best, kind = _argmax_kind(curve)
    return OcResult(
        procedure=procedure.tag,
        threshold=float(A),
        head_start=r,
        arl_false_alarm=ws.phi_pre(r),
        delay_curve=curve.delays,
        survival=curve.survival,
        sadd=best,
        add_infinity=curve.add_infinity,
        argmax_kind=kind,
        lower_bound=lower_bound(model, A, n) if procedure.kind == SR else None,
        detection_zero=float(curve.delays[0]),
    )


def arl(model: ChangepointModel, procedure: Procedure, A: float, n: int = DEFAULT_GRID_N) -> float:
    """ARL to false alarm of ``procedure`` at threshold ``A``."""
    ws = _ws(model, A, n)
    if procedure.kind == SRP:
        return ws.qsd.integrate(ws.phi_pre.values)
    if procedure.kind == SR:
        return ws.phi_pre(0.0)
    r = ws.qsd.mean if procedure.head_start == "mu_A" else float(procedure.head_start)
    _check_head_start(r, A)
    return ws.phi_pre(r)


def calibrate_threshold(
    model: ChangepointModel,
    procedure: Procedure,
    gamma: float,
    n: int = DEFAULT_GRID_N,
    rtol: float = 1e-4,
    a_range: tuple[float, float] = (1e-8, 1e8),
) -> float:
    """Threshold ``A`` with ``E_inf T = gamma`` (relative tolerance ``rtol``).

    The ARL is increasing in ``A``; a bracket is grown geometrically from a
    first guess and then closed with Brent's method (bisection safeguarded
    secant steps).
    """
    if not gamma > 1:
        raise ConfigurationError(f"gamma must exceed 1, got {gamma!r}")
    if gamma < 2:
        warnings.warn(f"gamma={gamma} is close to 1; the calibrated threshold will be tiny", RuntimeWarning)
    lo_lim, hi_lim = a_range
    r_fixed = 0.0 if procedure.kind != SR_R or procedure.head_start == "mu_A" else float(procedure.head_start)

    def excess(A: float) -> float:
        return arl(model, procedure, A, n) / gamma - 1.0

    a = min(max(gamma / 2.0, r_fixed * 1.5 + 1e-6, lo_lim), hi_lim)
    fa = excess(a)
    factor = 1.1
    b, fb = a, fa
    while (fa > 0) == (fb > 0):
        a, fa = b, fb
        b = b / factor if fa > 0 else b * factor
        if b <= max(lo_lim, r_fixed) or b >= hi_lim:
            raise CalibrationError(f"no threshold in {a_range} gives ARL {gamma}")
        fb = excess(b)
        factor = min(factor * factor, 1e3)
    lo, hi = sorted((a, b))
    root = optimize.brentq(excess, lo, hi, rtol=rtol * 1e-2, xtol=1e-12, maxiter=200)
    if abs(excess(root)) > rtol:
        raise CalibrationError(f"calibration stalled at A={root:g}")
    return float(root)


def conditional_delay(
    model: ChangepointModel, procedure: Procedure, A: float, nu: int, n: int = DEFAULT_GRID_N
) -> float:
    """``E_nu(T - nu | T > nu)`` for a single changepoint ``nu``."""
    if nu < 0:
        raise ConfigurationError("changepoint must be nonnegative")
    res = operating_characteristics(model, procedure, A, max(nu, 1), n)
    curve = res.delay_curve
    return float(curve[nu]) if nu < curve.size else float(res.add_infinity)


def clear_cache() -> None:
    _workspace.cache_clear()


def survival_sum_check(curve: DelayCurve) -> float:
    """``sum_nu p_nu`` with a geometric tail fitted to the last two terms."""
    p = curve.survival
    ratio = p[-1] / p[-2]
    tail = p[-1] * ratio / (1.0 - ratio) if ratio < 1 else math.inf
    return float(p.sum() + tail)
