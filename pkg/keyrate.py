from __future__ import annotations

import functools
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

import settings
from entropy import ZERO_CUTOFF, shannon, spectrum_entropy, von_neumann
from errors import (
    InfeasibleErrorRateError,
    PreprocessingRangeError,
    SolverConvergenceError,
    UnsupportedProtocolError,
)
from protocols import Basis, Protocol
from simplex import projected_descent
from state_geometry import BiphotonState

logger = logging.getLogger(__name__)

INV_LN2 = 1.0 / math.log(2.0)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

# rates at or below this count as no key
RATE_FLOOR = 1e-10
CRITICAL_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class BellDiagonalState:
    """Weights lambda[j][k] on the generalized Bell states Phi_jk."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        d = int(round(math.sqrt(w.size)))
        if d * d != w.size or d not in (2, 3):
            raise ValueError(f"expected d*d weights with d in (2, 3), got {w.size}")
        w = w.reshape(d, d)
        if np.min(w) < -1e-14:
            raise ValueError(f"negative Bell weight {np.min(w):.3e}")
        w = np.maximum(w, 0.0)
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"Bell weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @property
    def mu(self) -> np.ndarray:
        # probability that Bob's symbol is Alice's shifted by k
        return self.weights.sum(axis=0)


@dataclass(frozen=True)
class ConstraintSet:
    # rows[t][j][k]: error probability of basis t on Phi_jk
    rows: np.ndarray
    target: float

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.min() < -1e-12 or rows.max() > 1 + 1e-12:
            raise ValueError("error coefficients must lie in [0, 1]")
        if np.any(np.abs(rows[:, 0, 0]) > 1e-12):
            raise ValueError("Phi_00 must give no error in any basis")

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def system(self) -> Tuple[np.ndarray, np.ndarray]:
        n = self.dim ** 2
        a = np.vstack([np.ones(n), self.rows.reshape(len(self.rows), n)])
        b = np.concatenate([[1.0], np.full(len(self.rows), self.target)])
        return a, b

    def residual(self, lam: np.ndarray) -> float:
        a, b = self.system()
        return float(np.max(np.abs(a @ np.ravel(lam) - b)))


@dataclass(frozen=True)
class KeyRatePoint:
    protocol: str
    dimension: int
    error_rate: float
    preprocessing: bool
    q: float
    rate: float

    def __post_init__(self):
        if self.rate > math.log2(self.dimension) + 1e-9:
            raise ValueError(f"rate {self.rate} exceeds log2(d)")

    @property
    def rate_normalized(self) -> float:
        return self.rate / math.log2(self.dimension)


@dataclass(frozen=True)
class MinRateResult:
    rate: float
    state: BellDiagonalState
    q: float
    starts: int
    converged_starts: int
    vertices: int


def bell_vector(j: int, k: int, d: int) -> np.ndarray:
    """|Phi_jk> = sum_s omega^(j s) |s>|s+k> / sqrt(d), index s*d + t for |s>|t>."""
    if not (0 <= j < d and 0 <= k < d):
        raise IndexError(f"Bell index ({j}, {k}) out of range for d={d}")
    omega = np.exp(2j * np.pi / d)
    vec = np.zeros(d * d, dtype=complex)
    for s in range(d):
        vec[s * d + (s + k) % d] = omega ** (j * s)
    return vec / math.sqrt(d)


def bell_matrix(d: int) -> np.ndarray:
    # column j*d + k holds Phi_jk
    return np.column_stack([bell_vector(j, k, d) for j in range(d) for k in range(d)])


def error_coefficients(alice_basis: Basis) -> np.ndarray:
    """Discordance probability of Phi_jk when Alice measures the basis and Bob
    its complex conjugate."""
    d = alice_basis.dim
    v = alice_basis.matrix
    e = np.zeros((d, d))
    for j in range(d):
        for k in range(d):
            phi = bell_vector(j, k, d).reshape(d, d)
            probs = np.abs(v.conj().T @ phi @ v) ** 2
            e[j, k] = 1.0 - np.trace(probs)
    return np.clip(e, 0.0, 1.0)


def symmetric_frame(protocol: Protocol) -> Protocol:
    """Undo the diagonal phases that keep a protocol off the Weyl frame.

    A diagonal unitary D on Alice (conj(D) on Bob) leaves the computational
    basis and Phi_00 alone and does not change the key rate. D is read off the
    first vector of the second basis.
    """
    ref = protocol.bases[1].vectors[0].amplitudes
    if np.any(np.abs(ref) < 1e-12):
        return protocol
    phases = ref / np.abs(ref)
    if np.allclose(phases, phases[0], atol=1e-14):
        return protocol
    undo = phases.conj()
    bases = tuple(
        Basis(b.name, tuple(BiphotonState(undo * v.amplitudes) for v in b.vectors))
        for b in protocol.bases
    )
    return Protocol(protocol.name, protocol.dimension, bases)


@functools.lru_cache(maxsize=None)
def _protocol_rows(protocol: Protocol) -> np.ndarray:
    frame = symmetric_frame(protocol)
    rows = np.stack([error_coefficients(b) for b in frame.bases])
    snapped = np.round(rows)
    if np.max(np.abs(rows - snapped)) > 1e-9:
        raise UnsupportedProtocolError(
            f"protocol {protocol.name!r} has bases outside the Bell-diagonal security model; "
            "coherent-attack rates are only available for "
            "bb84, qubit-3mub, umbrella, qutrit-3mub and qutrit-4mub"
        )
    return snapped


def constraint_set(protocol: Protocol, error_rate: float) -> ConstraintSet:
    return ConstraintSet(_protocol_rows(protocol), float(error_rate))


def _check_q(q: float, d: int) -> None:
    if not 0.0 <= q < (d - 1) / d:
        raise PreprocessingRangeError(f"preprocessing q must be in [0, {(d - 1) / d:.4f}), got {q}")


def _coherence(q: float, d: int) -> float:
    return 1.0 - q * d / (d - 1)


def _coherence_matrix(q: float, d: int) -> np.ndarray:
    c = _coherence(q, d)
    return np.full((d, d), c) + (1.0 - c) * np.eye(d)


def eve_blocks(lam: BellDiagonalState, q: float = 0.0) -> np.ndarray:
    """Eve's conditional state blocks B_k, shape (k, j, j')."""
    d = lam.dim
    _check_q(q, d)
    root = np.sqrt(lam.weights.T)
    return root[:, :, None] * _coherence_matrix(q, d)[None, :, :] * root[:, None, :]


def rate_functional(lam: BellDiagonalState, q: float = 0.0) -> float:
    """log2 d + sum_k S(B_k) - H(lambda) - H(mu') in bits per sifted symbol."""
    d = lam.dim
    blocks = eve_blocks(lam, q)
    s_blocks = float(np.sum(spectrum_entropy(np.linalg.eigvalsh(blocks))))
    c = _coherence(q, d)
    mu_noisy = c * lam.mu + q / (d - 1)
    return math.log2(d) + s_blocks - shannon(lam.weights) - shannon(mu_noisy)


def rate_functional_generic(lam: BellDiagonalState, q: float = 0.0) -> float:
    """Same rate by explicit purification, Alice's measurement and partial traces."""
    d = lam.dim
    _check_q(q, d)
    phi = bell_matrix(d)
    w = lam.weights.ravel()
    rho_ab = (phi * w) @ phi.conj().T

    # purification: column e = jk of Eve's register carries sqrt(lambda_jk) Phi_jk
    psi = phi * np.sqrt(w)
    flip = np.full((d, d), q / (d - 1)) if d > 1 else np.zeros((1, 1))
    np.fill_diagonal(flip, 1.0 - q)

    eve_given_x = []
    for x in range(d):
        block = psi[x * d:(x + 1) * d, :]
        eve_given_x.append(block.T @ block.conj())
    s_xe = 0.0
    for x_noisy in range(d):
        rho = sum(flip[x, x_noisy] * eve_given_x[x] for x in range(d))
        s_xe += shannon(np.linalg.eigvalsh(rho))

    p_xy = np.real(np.diag(rho_ab)).reshape(d, d)
    p_noisy = flip.T @ p_xy
    h_x_given_y = shannon(p_noisy) - shannon(p_noisy.sum(axis=0))
    return s_xe - von_neumann(rho_ab) - h_x_given_y


class _RateObjective:
    """Rate and gradient at fixed q, evaluated through K Lambda_k K with K = C^(1/2)."""

    def __init__(self, d: int, q: float):
        _check_q(q, d)
        self.d = d
        self.q = q
        self.c = _coherence(q, d)
        vals, vecs = np.linalg.eigh(_coherence_matrix(q, d))
        self.k = (vecs * np.sqrt(np.maximum(vals, 0.0))) @ vecs.T
        self.log_d = math.log2(d)

    def __call__(self, lam: np.ndarray) -> Tuple[float, np.ndarray]:
        d, k = self.d, self.k
        lam = np.maximum(lam.reshape(d, d), 0.0)
        blocks = np.einsum("ij,jk,lj->kil", k, lam, k)
        vals, vecs = np.linalg.eigh(blocks)
        logs = np.log2(np.maximum(vals, ZERO_CUTOFF))
        log_blocks = np.einsum("kia,ka,kja->kij", vecs, logs, vecs.conj()).real
        diag_terms = np.einsum("ij,kjl,li->ik", k, log_blocks, k)

        mu_noisy = self.c * lam.sum(axis=0) + self.q / (d - 1)
        value = self.log_d + float(np.sum(spectrum_entropy(vals))) - shannon(lam) - shannon(mu_noisy)

        grad = (
            -diag_terms
            + np.log2(np.maximum(lam, ZERO_CUTOFF))
            + self.c * np.log2(np.maximum(mu_noisy, ZERO_CUTOFF))[None, :]
            + self.c * INV_LN2
        )
        return value, grad.ravel()


def _independent_rows(a: np.ndarray, b: np.ndarray):
    keep: List[int] = []
    for i in range(a.shape[0]):
        if np.linalg.matrix_rank(a[keep + [i]]) > len(keep):
            keep.append(i)
    return a[keep], b[keep]


def feasible_vertices(constraints: ConstraintSet) -> np.ndarray:
    """Vertices of {lambda >= 0, sum = 1, e_t . lambda = Q}, shape (n_vertices, d*d)."""
    a_full, b_full = constraints.system()
    a, b = _independent_rows(a_full, b_full)
    r, n = a.shape
    found = {}
    for cols in itertools.combinations(range(n), r):
        sub = a[:, cols]
        if np.linalg.matrix_rank(sub) < r:
            continue
        sol = np.linalg.solve(sub, b)
        if np.min(sol) < -1e-12:
            continue
        x = np.zeros(n)
        x[list(cols)] = np.maximum(sol, 0.0)
        if np.max(np.abs(a_full @ x - b_full)) > 1e-9:
            continue
        found.setdefault(tuple(np.round(x, 10)), x)
    if not found:
        raise InfeasibleErrorRateError(
            f"error rate {constraints.target} is outside the feasible range of the constraints"
        )
    return np.array(list(found.values()))


@functools.lru_cache(maxsize=512)
def _polytope(protocol: Protocol, error_rate: float) -> np.ndarray:
    verts = feasible_vertices(constraint_set(protocol, error_rate))
    logger.debug("%s at Q=%.6f: %d vertices", protocol.name, error_rate, len(verts))
    return verts


def _starts(n_vertices: int, n_random: int, seed: int, extra=()) -> List[np.ndarray]:
    starts = [np.asarray(w) for w in extra]
    starts.append(np.full(n_vertices, 1.0 / n_vertices))
    rng = np.random.default_rng(seed)
    starts.extend(rng.dirichlet(np.ones(n_vertices), size=n_random))
    return starts


def _minimize(
    protocol: Protocol,
    vertices: np.ndarray,
    q: float,
    starts: Sequence[np.ndarray],
    threads: int = 1,
):
    objective = _RateObjective(protocol.dimension, q)

    def fun(w):
        value, grad = objective(w @ vertices)
        return value, vertices @ grad

    if len(vertices) == 1:
        w = np.ones(1)
        return fun(w)[0], w, 1, 1

    def run(x0):
        return projected_descent(fun, x0, ftol=1e-10)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(x0) for x0 in starts]

    converged = [r for r in results if r.converged]
    if not converged:
        raise SolverConvergenceError(
            f"no start converged for {protocol.name} at q={q}",
            {
                "protocol": protocol.name,
                "q": q,
                "starts": len(results),
                "best": min(r.fun for r in results),
                "iterations": [r.nit for r in results],
            },
        )
    if len(converged) < len(results):
        logger.warning(
            "%s: %d of %d starts did not converge", protocol.name, len(results) - len(converged), len(results)
        )
    # lowest value wins, earliest start on ties, independent of scheduling
    best = min(range(len(results)), key=lambda i: (results[i].fun, i))
    return results[best].fun, results[best].x, len(results), len(converged)


def _finish(protocol: Protocol, vertices: np.ndarray, w: np.ndarray, q: float, starts: int, ok: int):
    lam = w @ vertices
    lam = np.maximum(lam, 0.0)
    lam = lam / lam.sum()
    state = BellDiagonalState(lam.reshape(protocol.dimension, protocol.dimension))
    return MinRateResult(rate_functional(state, q), state, q, starts, ok, len(vertices))


def min_rate(
    protocol: Protocol,
    error_rate: float,
    q: float = 0.0,
    n_starts: Optional[int] = None,
    seed: Optional[int] = None,
) -> MinRateResult:
    """Minimal Bell-diagonal rate at error rate Q in every basis, with preprocessing q."""
    _check_q(q, protocol.dimension)
    vertices = _polytope(protocol, float(error_rate))
    n_starts = max(20, n_starts or settings.N_STARTS)
    seed = settings.SOLVER_SEED if seed is None else seed
    starts = _starts(len(vertices), n_starts - 1, seed)
    _, w, total, ok = _minimize(protocol, vertices, q, starts, settings.THREADS)
    return _finish(protocol, vertices, w, q, total, ok)


def grid_min_rate(protocol: Protocol, error_rate: float, q: float = 0.0, step: float = 1e-3) -> float:
    """Brute-force check for qubit protocols whose feasible set is a point or a segment."""
    if protocol.dimension != 2:
        raise ValueError("dense grid cross-check is only available for qubit protocols")
    vertices = _polytope(protocol, float(error_rate))
    if len(vertices) > 2:
        raise ValueError(f"feasible set has {len(vertices)} vertices; grid check needs at most 2")
    if len(vertices) == 1:
        points = vertices
    else:
        span = float(np.max(np.abs(vertices[1] - vertices[0])))
        t = np.linspace(0.0, 1.0, max(2, int(math.ceil(span / step)) + 1))
        points = vertices[0][None, :] + t[:, None] * (vertices[1] - vertices[0])[None, :]
    rates = []
    for lam in points:
        lam = np.maximum(lam, 0.0)
        rates.append(rate_functional(BellDiagonalState(lam / lam.sum()), q))
    return float(min(rates))


def _golden_max(f, lo: float, hi: float, tol: float = 1e-6):
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def optimal_rate(protocol: Protocol, error_rate: float, q_step: Optional[float] = None) -> KeyRatePoint:
    """Best rate over the preprocessing noise q: grid scan, then golden-section refinement."""
    d = protocol.dimension
    q_max = (d - 1) / d
    step = q_step or settings.Q_GRID_STEP
    vertices = _polytope(protocol, float(error_rate))
    seed = settings.SOLVER_SEED
    warm = [np.full(len(vertices), 1.0 / len(vertices))]

    def scan(q):
        starts = _starts(len(vertices), settings.SCAN_STARTS, seed, extra=warm[-1:])
        value, w, _, _ = _minimize(protocol, vertices, q, starts)
        warm.append(w)
        return value

    grid = np.arange(0.0, q_max - 1e-12, step)
    values = [scan(float(q)) for q in grid]
    best = int(np.argmax(values))
    lo = float(grid[best - 1]) if best > 0 else 0.0
    hi = float(grid[best + 1]) if best + 1 < len(grid) else q_max - 1e-9
    warm.append(warm[best + 1])
    q_star, _ = _golden_max(scan, lo, hi)

    final = min_rate(protocol, error_rate, q_star)
    baseline = min_rate(protocol, error_rate, 0.0)
    if baseline.rate >= final.rate:
        final = baseline
    logger.info(
        "%s Q=%.6f: q*=%.6f rate=%.10f", protocol.name, error_rate, final.q, final.rate
    )
    return KeyRatePoint(protocol.name, d, float(error_rate), True, final.q, final.rate)


def rate_at(protocol: Protocol, error_rate: float, preprocessing: bool) -> KeyRatePoint:
    if preprocessing:
        return optimal_rate(protocol, error_rate)
    res = min_rate(protocol, error_rate, 0.0)
    return KeyRatePoint(protocol.name, protocol.dimension, float(error_rate), False, 0.0, res.rate)


def critical_error_rate(protocol: Protocol, preprocessing: bool = False) -> float:
    """Largest Q with a positive rate, by a bracketing search on Q.

    A rate at or below RATE_FLOOR counts as zero: with preprocessing the
    rate saturates at ~0 past the threshold instead of turning negative.
    False-position steps with Illinois damping are taken only while the
    upper end is clearly negative; otherwise the bracket is bisected. The
    search stops on bracket width alone.
    """
    _protocol_rows(protocol)

    def rate(q_err):
        return rate_at(protocol, q_err, preprocessing).rate

    if preprocessing:
        base = critical_error_rate(protocol, False)
        lo, hi = max(0.0, base - 1e-3), base + 0.06
    else:
        lo, hi = 0.0, 0.3
    f_lo, f_hi = rate(lo), rate(hi)
    while f_hi > RATE_FLOOR:
        lo, f_lo = hi, f_hi
        hi = hi + 0.05
        f_hi = rate(hi)
    if f_lo <= RATE_FLOOR:
        raise SolverConvergenceError(
            f"rate is not positive at the lower bracket for {protocol.name}",
            {"lo": lo, "rate_lo": f_lo, "hi": hi, "rate_hi": f_hi},
        )

    side = 0
    for _ in range(200):
        if hi - lo < CRITICAL_TOL:
            break
        mid = 0.5 * (lo + hi)
        if f_hi < -RATE_FLOOR:
            guess = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
            if lo < guess < hi:
                mid = guess
        f_mid = rate(mid)
        logger.debug("%s: Q=%.10f rate=%.3e", protocol.name, mid, f_mid)
        if f_mid > RATE_FLOOR:
            lo, f_lo = mid, f_mid
            if side == 1:
                f_hi *= 0.5
            side = 1
        else:
            hi, f_hi = mid, min(f_mid, 0.0)
            if side == -1:
                f_lo *= 0.5
            side = -1
    else:
        raise SolverConvergenceError(
            f"critical search did not narrow the bracket for {protocol.name}",
            {"lo": lo, "hi": hi},
        )
    critical = 0.5 * (lo + hi)
    logger.info("%s critical Q=%.6f (preprocessing=%s)", protocol.name, critical, preprocessing)
    return critical


def rate_curve(
    protocol: Protocol,
    error_rates: Sequence[float],
    preprocessing: bool = False,
    threads: Optional[int] = None,
) -> List[KeyRatePoint]:
    workers = threads or settings.THREADS

    def evaluate(q_err):
        return rate_at(protocol, float(q_err), preprocessing)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(evaluate, error_rates))
    return [evaluate(q) for q in error_rates]
