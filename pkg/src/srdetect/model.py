"""Changepoint models: pre/post densities and the likelihood-ratio laws.

A :class:`ChangepointModel` bundles everything the solvers and the
simulator need about a pair of densities ``f`` (pre-change) and ``g``
(post-change): the likelihood ratio ``g/f``, the distribution functions of
that ratio under both regimes, vectorised samplers and the Kullback-Leibler
number ``I = E_0 log(g/f)``.

Three models are built in:

* ``beta``: beta(2, 1) -> beta(1, 2), with every law in closed form;
* ``gaussian``: unit-variance mean shift 0 -> theta;
* ``exponential``: rate change ``pre_rate`` -> ``post_rate``.

Observations are scalar.  The likelihood ratio is assumed to have a
continuous (non-lattice) law; this is not checked for user models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Mapping

import numpy as np
from scipy import special

from .exceptions import ConfigurationError, DomainError

PRE = "pre"
POST = "post"
REGIMES = (PRE, POST)

ArrayFn = Callable[[np.ndarray], np.ndarray]
Sampler = Callable[[np.random.Generator, Any], np.ndarray]


@dataclass(frozen=True, eq=False)
class ChangepointModel:
    """Immutable description of a simple changepoint problem.

    ``sampler_pre(rng, size)`` / ``sampler_post(rng, size)`` follow the
    numpy ``Generator`` convention (``size=None`` gives a scalar).
    ``closed_forms`` carries optional exact results used by the asymptotics
    module (keys ``"c_r"``, ``"c_infinity"``, ``"stationary_cdf"``).
    """

    name: str
    lr: ArrayFn
    log_lr: ArrayFn
    cdf_lr_pre: ArrayFn
    cdf_lr_post: ArrayFn
    pdf_lr_pre: ArrayFn | None
    pdf_lr_post: ArrayFn | None
    sampler_pre: Sampler
    sampler_post: Sampler
    kl: float
    kl_se: float = 0.0
    density_pre: ArrayFn | None = None
    density_post: ArrayFn | None = None
    support: tuple[float, float] = (-math.inf, math.inf)
    smooth_kernel: bool = True
    params: Mapping[str, float] = field(default_factory=dict)
    closed_forms: Mapping[str, Any] = field(default_factory=dict)

    def cdf(self, regime: str) -> ArrayFn:
        return {PRE: self.cdf_lr_pre, POST: self.cdf_lr_post}[_check_regime(regime)]

    def pdf(self, regime: str) -> ArrayFn | None:
        return {PRE: self.pdf_lr_pre, POST: self.pdf_lr_post}[_check_regime(regime)]

    def sampler(self, regime: str) -> Sampler:
        return {PRE: self.sampler_pre, POST: self.sampler_post}[_check_regime(regime)]

    def __repr__(self) -> str:
        return f"ChangepointModel({self.name!r}, params={dict(self.params)})"


def _check_regime(regime: str) -> str:
    if regime not in REGIMES:
        raise ConfigurationError(f"regime must be one of {REGIMES}, got {regime!r}")
    return regime


def likelihood_ratio(model: ChangepointModel, x):
    """Return ``g(x)/f(x)``; raises :class:`DomainError` where ``f(x) = 0``."""
    arr = np.asarray(x, dtype=float)
    if model.density_pre is not None:
        fx = model.density_pre(arr)
        if np.any(~(fx > 0)):
            raise DomainError(f"observation outside the pre-change support: {x!r}")
    out = model.lr(arr)
    return float(out) if np.ndim(out) == 0 else out


def cdf_lr(model: ChangepointModel, regime: str, t):
    """Distribution function of the likelihood ratio, ``P_j(Lambda_1 <= t)``."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("likelihood-ratio cdf is defined for t >= 0")
    out = model.cdf(regime)(arr)
    return float(out) if np.ndim(out) == 0 else out


def kl_number(model: ChangepointModel) -> float:
    return model.kl


def sample_observation(model: ChangepointModel, regime: str, rng: np.random.Generator, size=None):
    """Draw i.i.d. observations from ``f`` (``"pre"``) or ``g`` (``"post"``)."""
    return model.sampler(regime)(rng, size)


def log_lr_cdf(model: ChangepointModel, regime: str, z):
    """Distribution function of ``log Lambda_1`` evaluated at ``z``."""
    return model.cdf(regime)(np.exp(np.asarray(z, dtype=float)))


def log_concavity_defect(model: ChangepointModel, regime: str, z_grid) -> float:
    """Largest second divided difference of ``log F`` over ``z_grid``.

    ``F`` is the cdf of ``log Lambda_1``.  A log-concave cdf gives a value
    ``<= 0`` up to rounding.  Grid points where ``F`` is below 1e-12 are
    skipped, since ``log F`` is not resolvable there.
    """
    z = np.asarray(z_grid, dtype=float)
    F = log_lr_cdf(model, regime, z)
    keep = F > 1e-12
    z, F = z[keep], F[keep]
    if z.size < 3:
        return -math.inf
    logF = np.log(F)
    slopes = np.diff(logF) / np.diff(z)
    second = np.diff(slopes) / (0.5 * (z[2:] - z[:-2]))
    return float(second.max())


# ---------------------------------------------------------------------------
# built-in models


@lru_cache(maxsize=None)
def beta_model() -> ChangepointModel:
    """beta(2, 1) pre-change, beta(1, 2) post-change; ``Lambda = 1/x - 1``."""

    def lr(x):
        return 1.0 / x - 1.0

    def log_lr(x):
        return np.log1p(-x) - np.log(x)

    def cdf_pre(t):
        return 1.0 - (1.0 + t) ** -2

    def cdf_post(t):
        return (t / (1.0 + t)) ** 2

    def pdf_pre(t):
        return 2.0 * (1.0 + t) ** -3

    def pdf_post(t):
        return 2.0 * t * (1.0 + t) ** -3

    def c_r(r):
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        out = np.where(r > 0, (1.0 + r) * np.log1p(r) / safe, 1.0)
        return float(out) if out.ndim == 0 else out

    return ChangepointModel(
        name="beta",
        lr=lr,
        log_lr=log_lr,
        cdf_lr_pre=cdf_pre,
        cdf_lr_post=cdf_post,
        pdf_lr_pre=pdf_pre,
        pdf_lr_post=pdf_post,
        sampler_pre=lambda rng, size=None: rng.beta(2.0, 1.0, size),
        sampler_post=lambda rng, size=None: rng.beta(1.0, 2.0, size),
        kl=1.0,
        density_pre=lambda x: np.where((x >= 0) & (x <= 1), 2.0 * x, 0.0),
        density_post=lambda x: np.where((x >= 0) & (x <= 1), 2.0 * (1.0 - x), 0.0),
        support=(0.0, 1.0),
        closed_forms={
            "c_r": c_r,
            "c_infinity": math.pi**2 / 6.0,
            "stationary_cdf": lambda x: np.asarray(x, dtype=float) / (1.0 + np.asarray(x, dtype=float)),
        },
    )


@lru_cache(maxsize=None)
def gaussian_model(theta: float = 1.0) -> ChangepointModel:
    """N(0, 1) -> N(theta, 1).  ``log Lambda`` is N(-+theta^2/2, theta^2)."""
    theta = float(theta)
    if theta == 0.0:
        raise ConfigurationError("gaussian model needs theta != 0")
    s = abs(theta)
    half = 0.5 * theta * theta

    def log_lr(x):
        return theta * x - half

    def _logt(t):
        with np.errstate(divide="ignore"):
            return np.log(t)

    def cdf_pre(t):
        return special.ndtr((_logt(t) + half) / s)

    def cdf_post(t):
        return special.ndtr((_logt(t) - half) / s)

    def _pdf(t, shift):
        t = np.asarray(t, dtype=float)
        pos = t > 0
        safe = np.where(pos, t, 1.0)
        z = (np.log(safe) + shift) / s
        return np.where(pos, np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * s * safe), 0.0)

    return ChangepointModel(
        name="gaussian",
        lr=lambda x: np.exp(log_lr(x)),
        log_lr=log_lr,
        cdf_lr_pre=cdf_pre,
        cdf_lr_post=cdf_post,
        pdf_lr_pre=lambda t: _pdf(t, half),
        pdf_lr_post=lambda t: _pdf(t, -half),
        sampler_pre=lambda rng, size=None: rng.normal(0.0, 1.0, size),
        sampler_post=lambda rng, size=None: rng.normal(theta, 1.0, size),
        kl=half,
        density_pre=lambda x: np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi),
        density_post=lambda x: np.exp(-0.5 * (x - theta) ** 2) / math.sqrt(2 * math.pi),
        params={"theta": theta},
    )


@lru_cache(maxsize=None)
def exponential_model(pre_rate: float = 1.0, post_rate: float = 0.5) -> ChangepointModel:
    """Exp(pre_rate) -> Exp(post_rate).

    ``Lambda`` is bounded on one side, so its density jumps at ``b/a``;
    such kernels are outside the integral-equation solver's scope.
    """
    a, b = float(pre_rate), float(post_rate)
    if a <= 0 or b <= 0 or a == b:
        raise ConfigurationError("exponential model needs distinct positive rates")
    c = a - b
    floor = b / a

    def log_lr(x):
        return math.log(b / a) + c * x

    def _cdf(t, rate):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            s = np.log(t / floor) / c  # x value at which Lambda(x) = t
        if c > 0:
            return np.where(t <= floor, 0.0, -np.expm1(-rate * np.maximum(s, 0.0)))
        return np.where(t >= floor, 1.0, np.exp(-rate * np.maximum(s, 0.0)))

    def _pdf(t, rate):
        t = np.asarray(t, dtype=float)
        inside = (t > floor) if c > 0 else ((t > 0) & (t < floor))
        safe = np.where(inside, t, floor)
        s = np.log(safe / floor) / c
        return np.where(inside, rate * np.exp(-rate * s) / (abs(c) * safe), 0.0)

    return ChangepointModel(
        name="exponential",
        lr=lambda x: np.exp(log_lr(x)),
        log_lr=log_lr,
        cdf_lr_pre=lambda t: _cdf(t, a),
        cdf_lr_post=lambda t: _cdf(t, b),
        pdf_lr_pre=lambda t: _pdf(t, a),
        pdf_lr_post=lambda t: _pdf(t, b),
        sampler_pre=lambda rng, size=None: rng.exponential(1.0 / a, size),
        sampler_post=lambda rng, size=None: rng.exponential(1.0 / b, size),
        kl=math.log(b / a) + a / b - 1.0,
        density_pre=lambda x: np.where(x >= 0, a * np.exp(-a * np.maximum(x, 0.0)), 0.0),
        density_post=lambda x: np.where(x >= 0, b * np.exp(-b * np.maximum(x, 0.0)), 0.0),
        support=(0.0, math.inf),
        smooth_kernel=False,
        params={"pre_rate": a, "post_rate": b},
    )


def custom_model(
    name: str,
    density_pre: ArrayFn,
    density_post: ArrayFn,
    sampler_pre: Sampler,
    sampler_post: Sampler,
    *,
    support: tuple[float, float] = (-math.inf, math.inf),
    cdf_lr_pre: ArrayFn | None = None,
    cdf_lr_post: ArrayFn | None = None,
    pdf_lr_pre: ArrayFn | None = None,
    pdf_lr_post: ArrayFn | None = None,
    n_mc: int = 200_000,
    seed: int = 0,
) -> ChangepointModel:
    """Build a model from user densities and samplers.

    Missing likelihood-ratio cdfs are replaced by empirical cdfs from
    ``n_mc`` draws; the KL number is always a Monte Carlo estimate with its
    standard error in ``kl_se``.  Without both ratio densities the model
    cannot be handed to the integral-equation solver.
    """
    rng = np.random.default_rng(seed)

    def log_lr(x):
        return np.log(density_post(x)) - np.log(density_pre(x))

    draws_pre = np.sort(np.exp(log_lr(np.asarray(sampler_pre(rng, n_mc), dtype=float))))
    draws_post = np.asarray(sampler_post(rng, n_mc), dtype=float)
    z_post = log_lr(draws_post)

    def _ecdf(sorted_draws):
        return lambda t: np.searchsorted(sorted_draws, np.asarray(t, dtype=float), side="right") / sorted_draws.size

    smooth = pdf_lr_pre is not None and pdf_lr_post is not None
    return ChangepointModel(
        name=name,
        lr=lambda x: density_post(x) / density_pre(x),
        log_lr=log_lr,
        cdf_lr_pre=cdf_lr_pre or _ecdf(draws_pre),
        cdf_lr_post=cdf_lr_post or _ecdf(np.sort(np.exp(z_post))),
        pdf_lr_pre=pdf_lr_pre,
        pdf_lr_post=pdf_lr_post,
        sampler_pre=sampler_pre,
        sampler_post=sampler_post,
        kl=float(z_post.mean()),
        kl_se=float(z_post.std(ddof=1) / math.sqrt(n_mc)),
        density_pre=density_pre,
        density_post=density_post,
        support=support,
        smooth_kernel=smooth,
    )


BUILTIN_MODELS: dict[str, Callable[..., ChangepointModel]] = {
    "beta": beta_model,
    "gaussian": gaussian_model,
    "exponential": exponential_model,
}


def get_model(name: str, **params) -> ChangepointModel:
    """Look up a built-in model by name."""
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown model {name!r}; built-in models: {', '.join(sorted(BUILTIN_MODELS))}"
        ) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for model {name!r}: {exc}") from None
