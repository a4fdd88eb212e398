"""Seeded Monte-Carlo run of a whole QKD session.

Alice prepares, the channel acts, Bob measures, both sift and reveal a
prefix of the sifted symbols to estimate the error rate. The key length is
the asymptotic rate times the unrevealed sifted symbols.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

import keyrate
import settings
from errors import ChannelSpecError, InfeasibleErrorRateError, UnsupportedProtocolError
from intercept_resend import ir_full_joint
from protocols import Protocol, get_protocol

logger = logging.getLogger(__name__)

CHUNK_SIZE = 4096
CONFIDENCE_Z = 3


class ChannelModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["ideal", "depolarizing", "intercept"] = "ideal"
    # depolarizing probability f, or intercepted fraction p
    strength: float = Field(0.0, ge=0.0, le=1.0)

    def spec(self) -> str:
        if self.kind == "ideal":
            return "ideal"
        return f"{self.kind}:{self.strength:g}"


class SessionConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    protocol: str
    n_symbols: int = Field(..., ge=1)
    channel: ChannelModel = ChannelModel()
    reveal_fraction: float = Field(0.1, gt=0.0, lt=1.0)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    preprocessing: bool = False


class BasisErrors(BaseModel):
    basis: str
    n_revealed: int
    n_errors: int
    error_rate: Optional[float] = None


class SessionReport(BaseModel):
    protocol: str
    n_sent: int
    n_sifted: int
    n_revealed: int
    q_estimated: Optional[float] = None
    q_interval: Optional[Tuple[float, float]] = None
    q_analytic: float
    rate_bits: Optional[float] = None
    key_length: int = 0
    basis_errors: List[BasisErrors] = []
    note: str = "asymptotic key length, no finite-key correction"


def parse_channel(text: str) -> ChannelModel:
    """Read `ideal`, `depolarizing:<f>` or `intercept:<p>`."""
    kind, _, value = text.strip().partition(":")
    kind = kind.lower()
    if kind == "ideal" and not value:
        return ChannelModel()
    if kind not in ("depolarizing", "intercept") or not value:
        raise ChannelSpecError(
            f"bad channel {text!r}; expected ideal, depolarizing:<f> or intercept:<p>"
        )
    try:
        return ChannelModel(kind=kind, strength=float(value))
    except (ValueError, ValidationError) as exc:
        raise ChannelSpecError(f"bad channel parameter in {text!r}: must be a number in [0, 1]") from exc


def analytic_error(protocol: Protocol, channel: ChannelModel) -> float:
    d = protocol.dimension
    if channel.kind == "depolarizing":
        return channel.strength * (d - 1) / d
    if channel.kind == "intercept":
        return channel.strength * ir_full_joint(protocol).error_rate
    return 0.0


def error_interval(q: float, n: int, z: float = CONFIDENCE_Z) -> Tuple[float, float]:
    if n == 0:
        return 0.0, 0.0
    delta = z * math.sqrt(q * (1 - q) / n)
    return max(0.0, q - delta), min(1.0, q + delta)


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _sample(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    # inverse-CDF draw, one row of probabilities per symbol
    cdf = np.cumsum(probs, axis=1)
    return np.minimum((cdf < u[:, None] * cdf[:, -1:]).sum(axis=1), probs.shape[1] - 1)


def _run_chunk(
    born: np.ndarray, channel: ChannelModel, seed: int, chunk: int, count: int
):
    """Sifted (basis, alice, bob) triples for one chunk of symbols."""
    m, d = born.shape[0], born.shape[1]
    rng = _chunk_rng(seed, chunk)
    basis_a = rng.integers(m, size=count)
    symbol = rng.integers(d, size=count)
    basis_b = rng.integers(m, size=count)

    probs = born[basis_a, symbol, basis_b]
    if channel.kind == "depolarizing":
        probs = (1.0 - channel.strength) * probs + channel.strength / d
    elif channel.kind == "intercept":
        hit = rng.random(count) < channel.strength
        basis_e = rng.integers(m, size=count)
        caught = _sample(born[basis_a, symbol, basis_e], rng.random(count))
        probs = np.where(hit[:, None], born[basis_e, caught, basis_b], probs)
    outcome = _sample(probs, rng.random(count))

    keep = basis_a == basis_b
    return basis_a[keep], symbol[keep], outcome[keep]


def _key_rate(protocol: Protocol, q_est: float, preprocessing: bool) -> Optional[float]:
    try:
        return keyrate.rate_at(protocol, q_est, preprocessing).rate
    except UnsupportedProtocolError:
        logger.info("%s has no coherent-attack rate; key length set to 0", protocol.name)
    except InfeasibleErrorRateError:
        logger.warning("estimated error %.6f is outside the feasible range for %s", q_est, protocol.name)
    return None


def run_session(config: SessionConfig, threads: Optional[int] = None) -> SessionReport:
    protocol = get_protocol(config.protocol)
    vectors = protocol.tensor()
    # born[i, a, j, b] = |<j_b|i_a>|^2
    born = np.abs(np.einsum("jbc,iac->iajb", vectors.conj(), vectors)) ** 2

    sizes = [
        min(CHUNK_SIZE, config.n_symbols - start) for start in range(0, config.n_symbols, CHUNK_SIZE)
    ]

    def work(chunk):
        return _run_chunk(born, config.channel, config.seed, chunk, sizes[chunk])

    workers = threads or settings.THREADS
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(c) for c in range(len(sizes))]

    bases = np.concatenate([p[0] for p in parts])
    alice = np.concatenate([p[1] for p in parts])
    bob = np.concatenate([p[2] for p in parts])
    n_sifted = int(bases.size)
    n_revealed = int(math.ceil(config.reveal_fraction * n_sifted))

    shown = slice(0, n_revealed)
    wrong = alice[shown] != bob[shown]
    breakdown = []
    for i, basis in enumerate(protocol.bases):
        in_basis = bases[shown] == i
        n_i = int(in_basis.sum())
        e_i = int(wrong[in_basis].sum())
        breakdown.append(BasisErrors(basis=basis.name, n_revealed=n_i, n_errors=e_i,
                                     error_rate=e_i / n_i if n_i else None))

    q_est = q_int = rate = None
    key_length = 0
    if n_revealed:
        q_est = float(wrong.mean())
        q_int = error_interval(q_est, n_revealed)
        rate = _key_rate(protocol, q_est, config.preprocessing)
        if rate is not None:
            key_length = max(0, math.floor(rate * (n_sifted - n_revealed)))
    else:
        logger.warning("no symbols survived sifting; nothing to estimate")

    logger.info(
        "%s: sent=%d sifted=%d revealed=%d Q=%s key=%d",
        protocol.name, config.n_symbols, n_sifted, n_revealed, q_est, key_length,
    )
    return SessionReport(
        protocol=protocol.name,
        n_sent=config.n_symbols,
        n_sifted=n_sifted,
        n_revealed=n_revealed,
        q_estimated=q_est,
        q_interval=q_int,
        q_analytic=analytic_error(protocol, config.channel),
        rate_bits=rate,
        key_length=key_length,
        basis_errors=breakdown,
    )


def report_json(report: SessionReport, config: SessionConfig) -> str:
    payload = {
        "version": settings.VERSION,
        "config": config.model_dump(mode="json"),
        "report": report.model_dump(mode="json"),
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


if __name__ == "__main__":
    cfg = SessionConfig(protocol="bb84", n_symbols=20000, channel=parse_channel("intercept:1"), seed=7)
    print(report_json(run_session(cfg), cfg))
