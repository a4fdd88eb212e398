from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

import settings
from entropy import mutual_information
from errors import DimensionMismatchError, NoCrossingError
from protocols import Basis, Protocol

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttackModel:
    """Intercept a fraction p of carriers; measure in a protocol basis chosen
    uniformly (basis=None) or always in one fixed basis."""

    p: float = 1.0
    basis: Optional[Basis] = None

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"intercept fraction must be in [0, 1], got {self.p}")


@dataclass(frozen=True)
class IRPoint:
    protocol: str
    dimension: int
    p: float
    error_rate: float
    i_ab: float
    i_ae: float

    @property
    def delta(self) -> float:
        return self.i_ab - self.i_ae

    def normalized(self) -> "IRPoint":
        # information in units of log2(d), for cross-dimension plots
        scale = math.log2(self.dimension)
        return replace(self, i_ab=self.i_ab / scale, i_ae=self.i_ae / scale)


@dataclass(frozen=True)
class JointTables:
    protocol: str
    dimension: int
    # P(a, b | i), shape (m, d, d)
    bob: np.ndarray
    # P(a, (e, k) | i), shape (m, d, n_eve_bases * d)
    eve: np.ndarray

    @property
    def error_rate(self) -> float:
        # sifted error at full interception, averaged over the announced basis
        return float(np.mean(1.0 - np.trace(self.bob, axis1=1, axis2=2)))

    @property
    def eve_information(self) -> float:
        return float(np.mean([mutual_information(t) for t in self.eve]))


def _eve_bases(protocol: Protocol, basis: Optional[Basis]):
    if basis is None:
        weights = np.full(protocol.n_bases, 1.0 / protocol.n_bases)
        return protocol.tensor(), weights
    if basis.dim != protocol.dimension:
        raise DimensionMismatchError(
            f"Eve basis {basis.name!r} does not match d={protocol.dimension}"
        )
    return basis.matrix.T[None, :, :], np.ones(1)


# |<e_k|i_a>|^2 for every Alice basis/vector against every Eve basis/vector
def _overlap_probabilities(protocol: Protocol, eve: np.ndarray) -> np.ndarray:
    alice = protocol.tensor()
    amps = np.einsum("ekc,iac->iaek", eve.conj(), alice)
    return np.abs(amps) ** 2


def ir_full_joint(protocol: Protocol, basis: Optional[Basis] = None) -> JointTables:
    """Exact tables for p = 1: Alice (i, a) -> Eve (e, k), resend e_k -> Bob b in basis i."""
    d = protocol.dimension
    eve, weights = _eve_bases(protocol, basis)
    probs = _overlap_probabilities(protocol, eve)
    m, _, ne, _ = probs.shape

    bob = np.einsum("iaek,ibek,e->iab", probs, probs, weights) / d
    eve_table = (probs * weights[None, None, :, None] / d).reshape(m, d, ne * d)

    logger.debug(
        "%s: full-intercept tables built, m=%d, eve bases=%d", protocol.name, m, ne
    )
    return JointTables(protocol.name, d, bob, eve_table)


def _point_from_tables(tables: JointTables, p: float, i_ae_full: float, q_full: float) -> IRPoint:
    d = tables.dimension
    identity = np.eye(d) / d
    mixed = (1.0 - p) * identity[None, :, :] + p * tables.bob
    i_ab = float(np.mean([mutual_information(t) for t in mixed]))
    return IRPoint(tables.protocol, d, p, p * q_full, i_ab, p * i_ae_full)


def ir_point(
    protocol: Protocol,
    p: float,
    basis: Optional[Basis] = None,
    tables: Optional[JointTables] = None,
) -> IRPoint:
    AttackModel(p, basis)
    if tables is None:
        tables = ir_full_joint(protocol, basis)
    return _point_from_tables(tables, p, tables.eve_information, tables.error_rate)


def ir_direct_point(protocol: Protocol, p: float, basis: Optional[Basis] = None) -> IRPoint:
    """Same quantities by enumerating every path with an explicit intercept flag.

    Used as an oracle for the linearity shortcuts in `ir_point`.
    """
    AttackModel(p, basis)
    d = protocol.dimension
    eve, weights = _eve_bases(protocol, basis)
    alice = protocol.tensor()
    ne = eve.shape[0]

    i_ab = i_ae = q = 0.0
    for i in range(protocol.n_bases):
        bob = np.zeros((d, d))
        # Eve's column 0 is "not intercepted", then one column per (e, k)
        eve_view = np.zeros((d, 1 + ne * d))
        for a in range(d):
            sent = alice[i, a]
            bob[a, a] += (1.0 - p) / d
            eve_view[a, 0] += (1.0 - p) / d
            for e in range(ne):
                for k in range(d):
                    pk = abs(np.vdot(eve[e, k], sent)) ** 2
                    eve_view[a, 1 + e * d + k] += p * weights[e] * pk / d
                    for b in range(d):
                        pb = abs(np.vdot(alice[i, b], eve[e, k])) ** 2
                        bob[a, b] += p * weights[e] * pk * pb / d
        i_ab += mutual_information(bob)
        i_ae += mutual_information(eve_view)
        q += 1.0 - np.trace(bob)

    m = protocol.n_bases
    return IRPoint(protocol.name, d, p, q / m, i_ab / m, i_ae / m)


def ir_sweep(
    protocol: Protocol,
    n_points: int,
    basis: Optional[Basis] = None,
    threads: Optional[int] = None,
) -> List[IRPoint]:
    if n_points < 2:
        raise ValueError("a sweep needs at least two points")
    tables = ir_full_joint(protocol, basis)
    i_ae_full = tables.eve_information
    q_full = tables.error_rate
    grid = np.linspace(0.0, 1.0, n_points)

    def evaluate(p):
        return _point_from_tables(tables, float(p), i_ae_full, q_full)

    workers = threads or settings.THREADS
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(evaluate, grid))
    return [evaluate(p) for p in grid]


def ir_crossing(protocol: Protocol, basis: Optional[Basis] = None, tol: float = 1e-10) -> float:
    """Error rate where I_AB = I_AE, found by bisection on the intercept fraction."""
    tables = ir_full_joint(protocol, basis)
    i_ae_full = tables.eve_information
    q_full = tables.error_rate

    def delta(p):
        return _point_from_tables(tables, p, i_ae_full, q_full).delta

    if delta(1.0) >= 0.0:
        raise NoCrossingError(protocol.name, q_full)

    lo, hi = 0.0, 1.0
    mid = 0.5
    for step in range(200):
        mid = 0.5 * (lo + hi)
        value = delta(mid)
        if abs(value) < tol or hi - lo < 1e-15:
            break
        if value > 0:
            lo = mid
        else:
            hi = mid
    logger.info("%s: crossing at p=%.10f after %d steps", protocol.name, mid, step + 1)
    return mid * q_full
