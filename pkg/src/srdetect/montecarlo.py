"""Monte Carlo estimates of operating characteristics.

Independent of the integral-equation solver; used to cross-check it.

Runs are grouped in fixed blocks of ``McConfig.block_size``.  Block ``b``
draws from ``SeedSequence(seed, spawn_key=(b,))``, so a block's stream
depends only on the master seed and its run indices.  Results are therefore
bit-identical for any ``parallel_width``.  Within a block all runs advance
in lockstep through :func:`srdetect.detectors.sr_step`.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .detectors import SRP, Procedure, resolve_head_start, sample_head_start, sr_step
from .exceptions import ConfigurationError
from .model import POST, PRE, ChangepointModel

CENSOR_LIMIT = 1e-3


@dataclass(frozen=True)
class McConfig:
    n_runs: int
    seed: int
    step_cap: int | None = None  # default 100 * A (plus the changepoint)
    parallel_width: int = 1
    block_size: int = 1000

    def __post_init__(self):
        if self.n_runs < 2:
            raise ConfigurationError("need at least two runs")
        if self.seed is None:
            raise ConfigurationError("Monte Carlo needs an explicit seed")
        if self.parallel_width < 1 or self.block_size < 1:
            raise ConfigurationError("parallel_width and block_size must be positive")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_runs: int
    censored: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return self.censored > CENSOR_LIMIT * self.n_runs

    def z_score(self, reference: float) -> float:
        return (self.mean - reference) / self.std_error if self.std_error > 0 else math.inf


def _estimate(samples: np.ndarray, censored: int, **extra) -> McEstimate:
    n = samples.size
    se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    est = McEstimate(float(samples.mean()), se, n, censored, extra)
    if est.flagged:
        warnings.warn(f"{censored} of {n} runs hit the step cap", RuntimeWarning)
    return est


def _blocks(cfg: McConfig):
    for b, start in enumerate(range(0, cfg.n_runs, cfg.block_size)):
        size = min(cfg.block_size, cfg.n_runs - start)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(b,)))
        yield size, rng


def _map_blocks(cfg: McConfig, fn):
    jobs = list(_blocks(cfg))
    if cfg.parallel_width == 1:
        parts = [fn(size, rng) for size, rng in jobs]
    else:
        with ThreadPoolExecutor(cfg.parallel_width) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    return [np.concatenate(col) for col in zip(*parts)]


def simulate_runs(
    model: ChangepointModel,
    A: float,
    R0: np.ndarray,
    nu: float,
    rng: np.random.Generator,
    step_cap: int,
):
    """Lockstep SR runs from head starts ``R0`` with changepoint ``nu``.

    Observations ``1..nu`` come from ``f`` and later ones from ``g``
    (``nu = inf`` for no change).  Returns stop times, final statistics and
    a censoring mask (runs still below ``A`` after ``step_cap`` steps).
    """
    R = np.array(R0, dtype=float)
    n_runs = R.size
    T = np.full(n_runs, step_cap, dtype=np.int64)
    final = np.zeros(n_runs)
    active = np.arange(n_runs)
    n = 0
    while active.size and n < step_cap:
        n += 1
        regime = PRE if n <= nu else POST
        x = model.sampler(regime)(rng, active.size)
        Ra = sr_step(R[active], model.lr(x))
        R[active] = Ra
        hit = Ra >= A
        done = active[hit]
        T[done] = n
        final[done] = Ra[hit]
        active = active[~hit]
    censored = np.zeros(n_runs, dtype=bool)
    censored[active] = True
    final[active] = R[active]
    return T, final, censored


def _head_starts(model, procedure, A, size, rng, qsd):
    if procedure.kind == SRP:
        return np.asarray(sample_head_start(qsd, rng, size))
    return np.full(size, resolve_head_start(procedure, model, A))


def _qsd_for(model, procedure, A):
    if procedure.kind != SRP:
        return None
    if procedure.qsd is not None:
        return procedure.qsd
    from .oc import quasi_stationary

    return quasi_stationary(model, A)


def _cap(cfg: McConfig, A: float, extra: float = 0) -> int:
    return int(cfg.step_cap if cfg.step_cap is not None else math.ceil(100 * A + extra))


def estimate_arl(model: ChangepointModel, procedure: Procedure, A: float, cfg: McConfig) -> McEstimate:
    """Mean stopping time on pure pre-change streams."""
    qsd = _qsd_for(model, procedure, A)
    cap = _cap(cfg, A)
    if procedure.kind != SRP:
        resolve_head_start(procedure, model, A)  # resolve once, outside the threads

    def block(size, rng):
        T, _, cens = simulate_runs(model, A, _head_starts(model, procedure, A, size, rng, qsd), math.inf, rng, cap)
        return T, cens

    T, cens = _map_blocks(cfg, block)
    return _estimate(T.astype(float), int(cens.sum()), step_cap=cap)


def estimate_add(
    model: ChangepointModel, procedure: Procedure, A: float, nu: int, cfg: McConfig
) -> McEstimate:
    """Conditional delay ``E_nu(T - nu | T > nu)`` by rejection of early alarms.

    ``extra["acceptance"]`` is the fraction of runs with ``T > nu``.
    """
    if nu < 0:
        raise ConfigurationError("changepoint must be nonnegative")
    qsd = _qsd_for(model, procedure, A)
    cap = _cap(cfg, A, nu)

    def block(size, rng):
        T, _, cens = simulate_runs(model, A, _head_starts(model, procedure, A, size, rng, qsd), nu, rng, cap)
        return T, cens

    T, cens = _map_blocks(cfg, block)
    keep = T > nu
    acceptance = float(keep.mean())
    if acceptance < 0.01:
        warnings.warn(
            f"only {acceptance:.2%} of runs survive to nu={nu}; use the integral-equation solver",
            RuntimeWarning,
        )
    return _estimate((T[keep] - nu).astype(float), int(cens[keep].sum()), acceptance=acceptance, nu=nu)


def estimate_stadd(model: ChangepointModel, A: float, nu_far: int, cfg: McConfig) -> McEstimate:
    """Stationary delay of the SR procedure restarted from zero after each alarm.

    Alarms at times ``<= nu_far`` are false alarms followed by a restart; the
    change hits observation ``nu_far + 1``.  Records the first alarm time
    after ``nu_far`` minus ``nu_far``.
    """
    if nu_far < 0:
        raise ConfigurationError("nu_far must be nonnegative")
    cap = _cap(cfg, A, nu_far)

    def block(size, rng):
        R = np.zeros(size)
        false_alarms = np.zeros(size, dtype=np.int64)
        for _ in range(nu_far):
            R = sr_step(R, model.lr(model.sampler_pre(rng, size)))
            alarm = R >= A
            false_alarms += alarm
            R[alarm] = 0.0
        T, _, cens = simulate_runs(model, A, R, 0, rng, max(cap - nu_far, 1))
        return T, cens, false_alarms

    T, cens, alarms = _map_blocks(cfg, block)
    return _estimate(T.astype(float), int(cens.sum()), nu_far=nu_far, mean_false_alarms=float(alarms.mean()))


class MartingaleCheck(NamedTuple):
    lhs: McEstimate  # E_inf T
    rhs: McEstimate  # E_inf R_T - r
    difference: McEstimate  # paired T - (R_T - r)


def verify_martingale(model: ChangepointModel, A: float, r: float, cfg: McConfig) -> MartingaleCheck:
    """Paired estimates of both sides of ``E_inf T = E_inf R_T - r``."""
    if not 0 <= r < A:
        raise ConfigurationError("head start must satisfy 0 <= r < A")
    cap = _cap(cfg, A)

    def block(size, rng):
        T, RT, cens = simulate_runs(model, A, np.full(size, float(r)), math.inf, rng, cap)
        return T, RT, cens

    T, RT, cens = _map_blocks(cfg, block)
    n_cens = int(cens.sum())
    T = T.astype(float)
    return MartingaleCheck(
        lhs=_estimate(T, n_cens),
        rhs=_estimate(RT - r, n_cens),
        difference=_estimate(T - (RT - r), n_cens),
    )


__all__ = [
    "McConfig",
    "McEstimate",
    "MartingaleCheck",
    "estimate_add",
    "estimate_arl",
    "estimate_stadd",
    "simulate_runs",
    "verify_martingale",
]
