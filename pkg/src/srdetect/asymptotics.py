"""Asymptotic constants and approximations for large thresholds.

Renewal-theoretic constants of the log-likelihood random walk
``S_n = Z_1 + ... + Z_n`` (``Z = log Lambda``):

* ``zeta = lim E_0 exp(-overshoot)``, estimated from
  ``zeta = exp(-sum_k (1/k) [P_0(S_k <= 0) + P_inf(S_k > 0)]) / I``;
* ``varkappa = lim E_0 overshoot``, estimated from
  ``varkappa = E_0 Z^2 / (2 E_0 Z) - sum_k (1/k) E_0 max(0, -S_k)``.

The series expectations are Monte Carlo trajectory averages; the leading
fraction is a 1-D quadrature over ``g``.

Stationary laws of ``R_n`` (under ``P_inf``) and of
``V_n = sum_i exp(-S_i)`` (under ``P_0``) give the constants
``C_r = E log(1 + r + V)`` and ``C_inf = E log(1 + R + V)``, which enter
the delay approximations ``SADD ~ (log A + varkappa - C) / I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .exceptions import ConfigurationError, DesignError, ResolutionError, UnsupportedModelError
from .model import POST, PRE, ChangepointModel
from .numerics import gauss_legendre_panels

INFINITY = math.inf  # selects C_inf in :func:`constant_c`


@dataclass(frozen=True)
class OvershootConstants:
    zeta: float
    zeta_se: float
    varkappa: float
    varkappa_se: float
    terms_used: int
    mc_paths: int


@dataclass(frozen=True)
class AsymptoticConstants:
    zeta: float
    varkappa: float
    c_infinity: float
    c_at: Callable[[float], float]
    kl: float
    zeta_se: float = 0.0
    varkappa_se: float = 0.0
    provenance: dict = field(default_factory=dict)


def _leading_fraction(model: ChangepointModel) -> tuple[float, str]:
    """``E_0 Z^2 / (2 E_0 Z)`` by quadrature over the post-change density."""
    if model.density_post is None:
        raise UnsupportedModelError("needs the post-change density")
    lo, hi = model.support

    def moment(k):
        def f(x):
            z = float(model.log_lr(x))
            return z**k * float(model.density_post(x))

        val, _ = integrate.quad(f, lo, hi, limit=200)
        return val

    return moment(2) / (2.0 * moment(1)), "quadrature"


def overshoot_constants(
    model: ChangepointModel,
    series_cap: int = 10_000,
    mc_paths: int = 1_000_000,
    rng: np.random.Generator | int | None = 0,
    batch: int = 20_000,
    patience: int = 500,
) -> OvershootConstants:
    """Series/Monte Carlo estimates of ``zeta`` and ``varkappa`` with SEs.

    Each batch of trajectories is advanced until ``series_cap`` or until
    ``patience`` consecutive series terms are exactly zero for every path in
    the batch (the walk has drifted beyond reach).  Per-path partial sums are
    kept so standard errors come from the path-to-path spread.
    """
    if series_cap < 1:
        raise ConfigurationError("series_cap must be positive")
    if model.kl <= 0:
        raise ConfigurationError("KL number must be positive")
    rng = np.random.default_rng(rng)
    lead, _ = _leading_fraction(model)

    used = 0

    def walk(regime: str, n_paths: int):
        nonlocal used
        ind = np.zeros(n_paths)
        neg = np.zeros(n_paths)
        S = np.zeros(n_paths)
        quiet = 0
        for k in range(1, series_cap + 1):
            S += model.log_lr(model.sampler(regime)(rng, n_paths))
            hit = (S <= 0) if regime == POST else (S > 0)
            if hit.any():
                quiet = 0
                ind += hit / k
                if regime == POST:
                    neg += np.maximum(-S, 0.0) / k
            else:
                quiet += 1
                if quiet >= patience:
                    break
        used = max(used, k)
        return ind, neg

    post_ind, post_neg, pre_ind = [], [], []
    for start in range(0, mc_paths, batch):
        size = min(batch, mc_paths - start)
        a, b = walk(POST, size)
        post_ind.append(a)
        post_neg.append(b)
        pre_ind.append(walk(PRE, size)[0])
    a = np.concatenate(post_ind)
    b = np.concatenate(pre_ind)
    neg = np.concatenate(post_neg)
    series = a.mean() + b.mean()
    series_se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    zeta = math.exp(-series) / model.kl
    return OvershootConstants(
        zeta=zeta,
        zeta_se=zeta * series_se,
        varkappa=float(lead - neg.mean()),
        varkappa_se=float(neg.std(ddof=1) / math.sqrt(neg.size)),
        terms_used=used,
        mc_paths=mc_paths,
    )


# ---------------------------------------------------------------------------
# stationary laws


@dataclass(frozen=True, eq=False)
class StationaryLaws:
    """Stationary law of ``R_n`` under ``P_inf`` and limit law of ``V_n`` under ``P_0``.

    Computed on ``[0, inf)`` through the map ``u = x / (1 + x)``; both laws
    have ``1/x`` tails, so their densities in ``u`` stay bounded and nothing
    is truncated.  ``x_max`` only fixes the reporting window: ``x``,
    ``q_st`` and ``q_tilde`` hold the nodes in ``[0, x_max]`` and the
    ``*_tail`` fields the mass beyond it.
    """

    model: ChangepointModel = field(repr=False)
    x_max: float
    nodes: np.ndarray  # all nodes on [0, inf)
    weights: np.ndarray  # quadrature weights in x
    masses_st: np.ndarray
    masses_tilde: np.ndarray
    eigenvalue_st: float
    eigenvalue_tilde: float

    @property
    def _window(self) -> np.ndarray:
        return self.nodes <= self.x_max

    @property
    def x(self) -> np.ndarray:
        return self.nodes[self._window]

    @property
    def q_st(self) -> np.ndarray:
        return (self.masses_st / self.weights)[self._window]

    @property
    def q_tilde(self) -> np.ndarray:
        return (self.masses_tilde / self.weights)[self._window]

    @property
    def tail_st(self) -> float:
        return float(1.0 - self.cdf_st(self.x_max))

    @property
    def tail_tilde(self) -> float:
        return float(1.0 - self.cdf_tilde(self.x_max))

    def cdf_st(self, x):
        """``Q_st(x) = int F_pre(x / (1 + y)) dQ_st(y)`` (stationarity equation)."""
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        vals = self.model.cdf_lr_pre(np.maximum(x_arr, 0.0)[:, None] / (1.0 + self.nodes[None, :])) @ self.masses_st
        vals = np.where(x_arr < 0, 0.0, np.clip(vals, 0.0, 1.0))
        return float(vals[0]) if np.ndim(x) == 0 else vals

    def cdf_tilde(self, x):
        """``Q~(x) = int P_0((1 + y) / Lambda <= x) dQ~(y)``."""
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        pos = x_arr > 0
        safe = np.where(pos, x_arr, 1.0)
        t = (1.0 + self.nodes[None, :]) / safe[:, None]
        vals = (1.0 - self.model.cdf_lr_post(t)) @ self.masses_tilde
        vals = np.where(pos, np.clip(vals, 0.0, 1.0), 0.0)
        return float(vals[0]) if np.ndim(x) == 0 else vals


def _compact_grid(grid_n: int, order: int = 8):
    panels = max(-(-grid_n // order), 8)
    s = np.linspace(0.0, 1.0, panels + 1)
    breaks = 1.0 - (1.0 - s) ** 3  # cluster panels near u = 1 (x = inf)
    u, w = gauss_legendre_panels(breaks, order)
    x = u / (1.0 - u)
    wx = w / (1.0 - u) ** 2
    return x, wx


def _unit_eigen(kernel: np.ndarray, wx: np.ndarray, tol: float = 1e-14, max_iter: int = 100_000):
    B = kernel * wx[None, :]
    m = wx / wx.sum()
    lam_old = np.nan
    for _ in range(max_iter):
        nxt = B.T @ m
        lam = float(nxt.sum())
        m = nxt / lam
        if abs(lam - lam_old) < tol:
            return m, lam
        lam_old = lam
    raise ResolutionError("stationary-law power iteration did not converge")


def stationary_laws(model: ChangepointModel, x_max: float = 1000.0, grid_n: int = 2048) -> StationaryLaws:
    """Solve both unit-eigenvalue problems by power iteration.

    ``q_st`` uses the kernel ``d/dx F_pre(x / (1 + y))``.  ``q~`` uses
    ``-d/dx F_post((1 + y) / x)``: ``V_n`` has the law of the reversed sum
    obeying ``V_n = (1 + V_{n-1}) / Lambda_n``.
    """
    if model.pdf_lr_pre is None or model.pdf_lr_post is None or not model.smooth_kernel:
        raise UnsupportedModelError(f"model {model.name!r} lacks smooth likelihood-ratio densities")
    x, wx = _compact_grid(grid_n)
    y = x[:, None]
    k_st = model.pdf_lr_pre(x[None, :] / (1.0 + y)) / (1.0 + y)
    t = (1.0 + y) / x[None, :]
    k_tilde = model.pdf_lr_post(t) * t / x[None, :]
    m_st, lam_st = _unit_eigen(k_st, wx)
    m_tilde, lam_tilde = _unit_eigen(k_tilde, wx)
    laws = StationaryLaws(
        model=model,
        x_max=float(x_max),
        nodes=x,
        weights=wx,
        masses_st=m_st,
        masses_tilde=m_tilde,
        eigenvalue_st=lam_st,
        eigenvalue_tilde=lam_tilde,
    )
    worst = max(laws.tail_st, laws.tail_tilde)
    if worst >= 0.05:
        raise ResolutionError(f"tail mass {worst:.3f} beyond x_max={x_max:g}; increase x_max")
    return laws


def constant_c(
    model: ChangepointModel,
    r: float,
    laws: StationaryLaws | None = None,
    method: str = "auto",
) -> float:
    """``C_r`` for ``r >= 0``, or ``C_inf`` when ``r`` is :data:`INFINITY`.

    ``method`` is ``"closed_form"`` (built-in beta only), ``"quadrature"``
    (needs ``laws``) or ``"auto"`` (closed form when available).
    """
    if r < 0:
        raise ConfigurationError("r must be nonnegative")
    forms = model.closed_forms
    key = "c_infinity" if math.isinf(r) else "c_r"
    if method == "auto":
        method = "closed_form" if key in forms else "quadrature"
    if method == "closed_form":
        if key not in forms:
            raise UnsupportedModelError(f"no closed form for {key} in model {model.name!r}")
        return float(forms[key]) if math.isinf(r) else float(forms[key](r))
    if method != "quadrature":
        raise ConfigurationError(f"unknown method {method!r}")
    if laws is None:
        laws = stationary_laws(model)
    y = laws.nodes
    if math.isinf(r):
        return float(laws.masses_st @ np.log1p(y[:, None] + y[None, :]) @ laws.masses_tilde)
    return float(laws.masses_tilde @ np.log1p(r + y))


def asymptotic_constants(
    model: ChangepointModel,
    overshoot: OvershootConstants | None = None,
    laws: StationaryLaws | None = None,
    **overshoot_kw,
) -> AsymptoticConstants:
    """Collect every constant with its provenance."""
    if overshoot is None:
        overshoot = overshoot_constants(model, **overshoot_kw)
    closed = "c_r" in model.closed_forms
    if not closed and laws is None:
        laws = stationary_laws(model)
    method = "closed_form" if closed else "quadrature"
    return AsymptoticConstants(
        zeta=overshoot.zeta,
        varkappa=overshoot.varkappa,
        c_infinity=constant_c(model, INFINITY, laws, method),
        c_at=lambda r: constant_c(model, r, laws, method),
        kl=model.kl,
        zeta_se=overshoot.zeta_se,
        varkappa_se=overshoot.varkappa_se,
        provenance={
            "zeta": "series_mc",
            "varkappa": "series_mc",
            "c_infinity": method,
            "c_r": method,
            "kl": "closed_form" if model.kl_se == 0 else "mc",
        },
    )


def approx_arl(A: float, zeta: float, head_start: float = 0.0) -> float:
    """``E_inf T ~ A / zeta - r``; pass ``mu_A`` as ``head_start`` for SRP."""
    return A / zeta - head_start


def approx_sadd(
    kind: str,
    constants: AsymptoticConstants,
    A: float | None = None,
    gamma: float | None = None,
) -> float:
    """``(log A + varkappa - C) / I`` with ``C = C_0`` for SR, ``C_inf`` otherwise.

    ``kind`` is one of ``"SR"``, ``"SR_r"`` (designed head start),
    ``"SRP"`` or ``"lower_bound"``.  Given ``gamma`` instead of ``A``,
    ``A = gamma * zeta`` is used.
    """
    if (A is None) == (gamma is None):
        raise ConfigurationError("give exactly one of A and gamma")
    if A is None:
        A = gamma * constants.zeta
    if kind == "SR":
        c = constants.c_at(0.0)
    elif kind in ("SR_r", "SRP", "lower_bound"):
        c = constants.c_infinity
    else:
        raise ConfigurationError(f"unknown kind {kind!r}")
    return (math.log(A) + constants.varkappa - c) / constants.kl


def design_head_start(
    mode: str,
    model: ChangepointModel,
    A: float | None = None,
    laws: StationaryLaws | None = None,
    method: str = "auto",
    n: int = 2048,
) -> float:
    """Head start for SR-r.

    ``"quasi_mean"`` returns ``mu_A``; ``"equalizer"`` solves
    ``C_r = C_inf``, whose root does not depend on ``A``.
    """
    if mode == "quasi_mean":
        if A is None:
            raise ConfigurationError("quasi_mean needs a threshold")
        from .oc import quasi_stationary

        return quasi_stationary(model, A, n).mean
    if mode != "equalizer":
        raise ConfigurationError(f"unknown head-start mode {mode!r}")
    if method != "closed_form" and "c_r" not in model.closed_forms and laws is None:
        laws = stationary_laws(model)
    target = constant_c(model, INFINITY, laws, method)

    def gap(r):
        return constant_c(model, r, laws, method) - target

    lo, hi = 1e-6, 1.0
    if gap(lo) > 0:
        raise DesignError("C_0 already exceeds C_inf")
    while gap(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise DesignError("no sign change for C_r - C_inf")
    return float(optimize.brentq(gap, lo, hi, xtol=1e-10))
