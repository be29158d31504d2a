"""Streaming Shiryaev-Roberts detectors: SR, SR-r and SRP.

All three share the recursion ``R_{n+1} = (1 + R_n) Lambda_{n+1}`` and stop
at the first ``n >= 1`` with ``R_n >= A``; they differ only in ``R_0``:
zero (SR), a fixed head start ``r`` (SR-r) or a draw from the
quasi-stationary distribution (SRP).

The detector is push-based.  The same :func:`sr_step` is used by the
vectorised Monte Carlo engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Union

import numpy as np

from .exceptions import ConfigurationError, DomainError
from .model import ChangepointModel

if TYPE_CHECKING:
    from .oc import QuasiStationary

SR = "SR"
SR_R = "SR_r"
SRP = "SRP"

HeadStart = Union[float, str]  # a number, or "mu_A" for the quasi-stationary mean


@dataclass(frozen=True)
class Procedure:
    """Which member of the SR family to run.

    ``head_start`` is used by SR-r; it is a number or the string ``"mu_A"``
    (resolved against the threshold at hand).  ``qsd`` optionally pins the
    quasi-stationary distribution for SRP.
    """

    kind: str
    head_start: HeadStart = 0.0
    qsd: "QuasiStationary | None" = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in (SR, SR_R, SRP):
            raise ConfigurationError(f"unknown procedure {self.kind!r}")
        if self.kind == SR_R and isinstance(self.head_start, str) and self.head_start != "mu_A":
            raise ConfigurationError(f"unknown head start {self.head_start!r}")
        if self.kind == SR_R and not isinstance(self.head_start, str) and self.head_start < 0:
            raise ConfigurationError("head start must be nonnegative")

    @classmethod
    def sr(cls) -> "Procedure":
        return cls(SR)

    @classmethod
    def sr_r(cls, r: HeadStart) -> "Procedure":
        return cls(SR_R, r)

    @classmethod
    def srp(cls, qsd: "QuasiStationary | None" = None) -> "Procedure":
        return cls(SRP, qsd=qsd)

    @property
    def tag(self) -> str:
        if self.kind == SR_R:
            r = self.head_start
            return f"SR_r({r})" if isinstance(r, str) else f"SR_r({r:g})"
        return self.kind


def sr_step(R, lam):
    """One step of the SR recursion, ``(1 + R) * lam``."""
    if np.any(np.asarray(R) < 0) or np.any(np.asarray(lam) < 0):
        raise DomainError("SR recursion needs R >= 0 and lambda >= 0")
    return (1.0 + R) * lam


@dataclass
class DetectorState:
    head_start: float
    statistic: float
    step: int
    threshold: float


@dataclass(frozen=True)
class StoppingRecord:
    stop_time: int
    final_statistic: float
    overshoot_log: float  # log R_T - log A


@dataclass(frozen=True)
class Censored:
    """Returned when the stream ends before the statistic reaches ``A``."""

    steps: int
    statistic: float


class ShiryaevRoberts:
    """Push-based SR-type detector for one observation stream.

    >>> from srdetect.model import beta_model
    >>> det = ShiryaevRoberts(beta_model(), threshold=0.5)
    >>> det.update(0.5)
    True
    """

    def __init__(self, model: ChangepointModel, threshold: float, head_start: float = 0.0):
        if not threshold > 0:
            raise ConfigurationError(f"threshold must be positive, got {threshold!r}")
        if not 0 <= head_start < threshold:
            raise ConfigurationError(
                f"head start must satisfy 0 <= r < A (r={head_start!r}, A={threshold!r})"
            )
        self.model = model
        self.state = DetectorState(float(head_start), float(head_start), 0, float(threshold))
        self.record: StoppingRecord | None = None

    @property
    def stopped(self) -> bool:
        return self.record is not None

    def update(self, x: float) -> bool:
        """Feed one observation; returns True once the alarm has been raised."""
        if self.record is not None:
            return True
        s = self.state
        s.statistic = sr_step(s.statistic, float(self.model.lr(x)))
        s.step += 1
        if s.statistic >= s.threshold:
            self.record = StoppingRecord(
                stop_time=s.step,
                final_statistic=s.statistic,
                overshoot_log=math.log(s.statistic) - math.log(s.threshold),
            )
            return True
        return False


def resolve_head_start(procedure: Procedure, model: ChangepointModel, A: float, **solver_kw) -> float:
    """Numeric head start of an SR/SR-r procedure at threshold ``A``."""
    if procedure.kind == SR:
        return 0.0
    if procedure.kind != SR_R:
        raise ConfigurationError("SRP draws its head start; use sample_head_start")
    if procedure.head_start == "mu_A":
        from .oc import quasi_stationary

        return quasi_stationary(model, A, **solver_kw).mean
    return float(procedure.head_start)


def run_detector(
    model: ChangepointModel,
    procedure: Procedure,
    A: float,
    stream: Iterable[float],
    rng: np.random.Generator | None = None,
) -> StoppingRecord | Censored:
    """Run one detector over ``stream`` until the alarm or the end of data.

    SRP needs ``procedure.qsd`` (the quasi-stationary law at this ``A``)
    and an ``rng`` for the head-start draw.
    """
    if procedure.kind == SRP:
        if procedure.qsd is None:
            raise ConfigurationError("SRP needs a quasi-stationary distribution")
        if rng is None:
            raise ConfigurationError("SRP needs an rng for the head-start draw")
        r0 = float(sample_head_start(procedure.qsd, rng))
    else:
        r0 = resolve_head_start(procedure, model, A)
    det = ShiryaevRoberts(model, A, r0)
    for x in stream:
        if det.update(x):
            return det.record
    return Censored(steps=det.state.step, statistic=det.state.statistic)


def sample_head_start(qsd: "QuasiStationary", rng: np.random.Generator, size=None):
    """Inverse-cdf draw from the discretized quasi-stationary distribution."""
    xs, cdf = qsd.cdf_table
    u = rng.random(size)
    out = np.interp(u, cdf, xs)
    return np.minimum(out, np.nextafter(qsd.threshold, 0.0))
