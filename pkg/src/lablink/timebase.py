"""Clock offset/drift estimation between nodes and mapping onto a common timeline.

The estimator is the classic four-timestamp request/response exchange:
the requester notes send time t0, the responder stamps receive t1 and
send t2 on its own clock, and the requester notes receive time t3.
Offset and round-trip time follow from those four numbers; the offset
error is bounded by rtt/2 regardless of how delay splits between the
two directions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateFit, InsufficientData, NegativeRtt

MAX_DRIFT = 1e-3  # seconds per second; anything larger is a broken fit


@dataclass(frozen=True)
class ClockSample:
    """One four-timestamp exchange. t0/t3 on the requester clock, t1/t2 on the responder clock."""

    t0: float
    t1: float
    t2: float
    t3: float


@dataclass(frozen=True)
class OffsetEstimate:
    """Single-exchange estimate of responder_clock - requester_clock."""

    offset: float
    rtt: float
    measured_at: float  # requester clock, = t3 of the exchange

    @property
    def uncertainty(self) -> float:
        return self.rtt / 2.0


@dataclass(frozen=True)
class ClockModel:
    """Linear map from a local clock onto the common timeline.

    common(t) = t + offset_at_reference + drift * (t - reference_time)
    """

    reference_time: float = 0.0
    offset_at_reference: float = 0.0
    drift: float = 0.0

    def __post_init__(self) -> None:
        if abs(self.drift) >= MAX_DRIFT:
            raise DegenerateFit(f"drift {self.drift} exceeds {MAX_DRIFT}")


IDENTITY_MODEL = ClockModel()


def estimate_offset(sample: ClockSample) -> OffsetEstimate:
    """Offset/rtt from one exchange; raises NegativeRtt on a corrupt one."""
    rtt = (sample.t3 - sample.t0) - (sample.t2 - sample.t1)
    if rtt < 0:
        raise NegativeRtt(f"computed rtt {rtt} < 0")
    offset = ((sample.t1 - sample.t0) + (sample.t2 - sample.t3)) / 2.0
    return OffsetEstimate(offset=offset, rtt=rtt, measured_at=sample.t3)


def fit_clock_model(estimates: Sequence[OffsetEstimate]) -> ClockModel:
    """Least-squares offset/drift fit over the lowest-RTT quartile of estimates.

    Exchanges that raced through the network carry the least asymmetry
    error, so only the quartile with the smallest rtt participates in the
    fit. With fewer than 4 surviving points a drift of 0 is assumed and
    the minimum-rtt estimate's offset is used directly.
    """
    if len(estimates) < 2:
        raise InsufficientData(f"need >= 2 estimates, got {len(estimates)}")
    times = np.array([e.measured_at for e in estimates])
    if np.all(times == times[0]):
        raise DegenerateFit("all estimates share one measured_at")

    rtts = np.array([e.rtt for e in estimates])
    cutoff = np.quantile(rtts, 0.25)
    survivors = [e for e in estimates if e.rtt <= cutoff]

    reference = estimates[-1].measured_at
    if len(survivors) < 4:
        best = min(survivors, key=lambda e: e.rtt)
        return ClockModel(reference_time=reference, offset_at_reference=best.offset, drift=0.0)

    xs = np.array([e.measured_at - reference for e in survivors])
    ys = np.array([e.offset for e in survivors])
    if np.all(xs == xs[0]):
        raise DegenerateFit("surviving estimates share one measured_at")
    drift, offset_at_ref = np.polyfit(xs, ys, 1)
    if abs(drift) >= MAX_DRIFT:
        raise DegenerateFit(f"fitted drift {drift} is implausible")
    return ClockModel(reference_time=reference, offset_at_reference=float(offset_at_ref), drift=float(drift))


def to_common_time(model: ClockModel, local_t: float) -> float:
    """Map a local timestamp onto the common timeline."""
    return local_t + model.offset_at_reference + model.drift * (local_t - model.reference_time)
