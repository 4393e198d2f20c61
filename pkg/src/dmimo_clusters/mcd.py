"""Modified multipath-component distance (MCD) across links.

The metric combines the Euclidean distance between the interacting-object
centers of two components with a normalized partial-delay distance. Both
quantities live in the global frame, so the metric is valid between
components of different panel-UE links.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .geometry import InteractionResult


@dataclass(frozen=True)
class McdContext:
    """Snapshot-level normalization constants for the delay distance.

    dtau_max is the largest pairwise partial-delay difference over all
    mapped components of the snapshot (all links jointly); tau_std is the
    population standard deviation of those partial delays. A zero dtau_max
    marks the degenerate all-equal-delay case, in which the delay distance
    is defined as zero.
    """

    dtau_max: float
    tau_std: float
    zeta: float = 1.0

    @property
    def degenerate(self) -> bool:
        return self.dtau_max == 0.0


@dataclass(frozen=True)
class McdValue:
    mcd_io: float
    mcd_tau: float
    mcd: float


def _partial_delays(interactions) -> np.ndarray:
    if isinstance(interactions, np.ndarray):
        return np.asarray(interactions, dtype=np.float64)
    return np.array([ia.partial_delay for ia in interactions], dtype=np.float64)


def build_context(interactions: Sequence[InteractionResult], zeta: float = 1.0) -> McdContext:
    """Normalization context from a snapshot's mapped components (>= 2)."""
    tau = _partial_delays(interactions)
    if tau.size < 2:
        raise ValueError(f"need at least 2 mapped components, got {tau.size}")
    if zeta <= 0:
        raise ValueError(f"zeta must be positive, got {zeta}")
    dtau_max = float(tau.max() - tau.min())
    tau_std = float(np.sqrt(np.mean((tau - tau.mean()) ** 2)))
    return McdContext(dtau_max=dtau_max, tau_std=tau_std, zeta=float(zeta))


def mcd_io(a: InteractionResult, b: InteractionResult) -> float:
    """Distance between the two components' IO centers, meters."""
    return float(np.linalg.norm(a.io_center - b.io_center))


def mcd_delay(a: InteractionResult, b: InteractionResult, ctx: McdContext) -> float:
    """Normalized partial-delay distance (dimensionless); 0 if dtau_max is 0."""
    if ctx.dtau_max == 0.0:
        return 0.0
    diff = abs(a.partial_delay - b.partial_delay)
    return ctx.zeta * (diff / ctx.dtau_max) * (ctx.tau_std / ctx.dtau_max)


def mcd(a: InteractionResult, b: InteractionResult, ctx: McdContext) -> McdValue:
    """Overall MCD of two components: root-sum-square of both distances."""
    d_io = mcd_io(a, b)
    d_tau = mcd_delay(a, b, ctx)
    return McdValue(mcd_io=d_io, mcd_tau=d_tau, mcd=math.hypot(d_io, d_tau))


def pairwise_mcd(io_centers: np.ndarray, partial_delays: np.ndarray, ctx: McdContext) -> np.ndarray:
    """Full symmetric MCD matrix, shape (N, N)."""
    return _kernels.mcd_matrix(io_centers, partial_delays, ctx.dtau_max, ctx.tau_std, ctx.zeta)


def cross_mcd(io_a, tau_a, io_b, tau_b, ctx: McdContext) -> np.ndarray:
    """MCD between two sets (e.g. centroids vs. components), shape (A, B)."""
    return _kernels.mcd_cross(io_a, tau_a, io_b, tau_b, ctx.dtau_max, ctx.tau_std, ctx.zeta)
