from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, List

import numpy as np

import settings
from protocols import (
    PROTOCOL_NAMES,
    dome_mub_pair_infeasibility,
    get_protocol,
    is_orthonormal,
    measurement_basis,
    ray_basis,
    tetrahedral_directions,
    umbrella_basis,
    unbiasedness_matrix,
)
from state_geometry import (
    NORTH,
    X_AXIS,
    Y_AXIS,
    BiphotonState,
    Manifold,
    Rotation,
    classify_state,
    dome_state,
    is_unitary,
    lift_su2,
    overlap,
    random_direction,
    rotation_matrix,
    sphere_state,
)

logger = logging.getLogger(__name__)

SUITE_SEED = 12345
TETRA_ANGLE = math.acos(1 / math.sqrt(3))


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance


def _pairs(rng, n):
    return [(random_direction(rng), random_direction(rng)) for _ in range(n)]


def _overlap_law(pairs, build_a, build_b, law) -> float:
    worst = 0.0
    for n, m in pairs:
        got = abs(overlap(build_a(n), build_b(m)))
        worst = max(worst, abs(got - law(n.angle_to(m))))
    return worst


def _random_unitary(rng) -> np.ndarray:
    z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


# reference ray vectors along x and y, compared modulo per-vector phase
_REFERENCE_RAYS = (
    (X_AXIS, ((1, math.sqrt(2), 1), (1, -math.sqrt(2), 1), (math.sqrt(2), 0, -math.sqrt(2)))),
    (Y_AXIS, ((1, math.sqrt(2) * 1j, -1), (-1, math.sqrt(2) * 1j, 1), (math.sqrt(2), 0, math.sqrt(2)))),
)


def _reference_ray_residual() -> float:
    worst = 0.0
    for n, reference in _REFERENCE_RAYS:
        basis = ray_basis(n)
        for raw in reference:
            target = BiphotonState(np.array(raw, dtype=complex) / 2)
            worst = max(worst, min(1 - abs(overlap(target, v)) for v in basis))
    return worst


def _classify_roundtrip(rng, n: int) -> float:
    worst = 0.0
    for _ in range(n):
        d = random_direction(rng)
        got = classify_state(sphere_state(d))
        err = d.angle_to(got.direction) if got.manifold is Manifold.SPHERE else math.pi
        got = classify_state(dome_state(d))
        if got.manifold is Manifold.DOME:
            # antipodes are the same dome point
            err = max(err, min(d.angle_to(got.direction), d.angle_to(-got.direction)))
        else:
            err = math.pi
        worst = max(worst, err)
    return worst


def run_suite(n_pairs: int = 10_000, seed: int = SUITE_SEED) -> List[CheckResult]:
    """Run every geometry invariant and return one result per check."""
    rng = np.random.default_rng(seed)
    pairs = _pairs(rng, n_pairs)
    results: List[CheckResult] = []

    def check(name: str, tol: float, compute: Callable[[], float], detail: str = ""):
        residual = float(compute())
        results.append(CheckResult(name, residual, tol, detail))
        logger.debug("%s: residual %.3e (tol %.0e)", name, residual, tol)

    check("sphere overlap law cos^2(T/2)", 1e-10,
          lambda: _overlap_law(pairs, sphere_state, sphere_state, lambda t: math.cos(t / 2) ** 2),
          f"{n_pairs} random pairs")
    check("dome overlap law |cos T|", 1e-10,
          lambda: _overlap_law(pairs, dome_state, dome_state, lambda t: abs(math.cos(t))),
          f"{n_pairs} random pairs")
    check("cross law sin(T)/sqrt(2)", 1e-10,
          lambda: _overlap_law(pairs, sphere_state, dome_state, lambda t: math.sin(t) / math.sqrt(2)),
          f"{n_pairs} random pairs")
    check("sphere pi-rotation orthogonality", 1e-10,
          lambda: max(abs(overlap(sphere_state(n), sphere_state(-n))) for n, _ in pairs))

    tetra = tetrahedral_directions()
    axes = (X_AXIS, Y_AXIS, NORTH)
    tetra_overlaps = [abs(overlap(dome_state(t), dome_state(a))) ** 2 for t in tetra for a in axes]
    check("tetrahedral dome unbiasedness 1/3", 1e-12,
          lambda: max(abs(v - 1 / 3) for v in tetra_overlaps),
          f"overlap^2 = {np.mean(tetra_overlaps):.6f}")
    check("tetrahedral angle arccos(1/sqrt 3)", 1e-12,
          lambda: max(abs(t.angle_to(a) - TETRA_ANGLE) for t in tetra for a in axes))

    cert = dome_mub_pair_infeasibility()
    check("dome MUB pair infeasibility", 0.0,
          lambda: cert.feasible_patterns + (0 if cert.single_triplet_orthonormal else 1),
          f"{cert.patterns_checked - cert.feasible_patterns}/{cert.patterns_checked} sign patterns infeasible, "
          f"min |row.row'| = {cert.min_abs_row_dot:.6f}")

    check("umbrella unbiased with measurement basis", 1e-12,
          lambda: np.max(np.abs(unbiasedness_matrix(measurement_basis(), umbrella_basis()) - 1 / 3)))
    check("equatorial ray bases match reference vectors", 1e-12, _reference_ray_residual)
    check("all protocol bases orthonormal", 0.0,
          lambda: sum(not is_orthonormal(b) for name in PROTOCOL_NAMES for b in get_protocol(name).bases))

    def lift_homomorphism():
        worst = 0.0
        for _ in range(1000):
            u, v = _random_unitary(rng), _random_unitary(rng)
            lifted = lift_su2(u @ v)
            worst = max(worst, float(np.max(np.abs(lifted - lift_su2(u) @ lift_su2(v)))))
            if not is_unitary(lifted):
                return math.inf
        return worst

    check("lift homomorphism and unitarity", 1e-10, lift_homomorphism, "1000 random pairs")

    def lift_matches_orbits():
        worst = 0.0
        for n, _ in pairs[:1000]:
            m = lift_su2(rotation_matrix(Rotation(n.theta, n.phi)))
            worst = max(worst, 1 - abs(overlap(sphere_state(n), BiphotonState(m[:, 0]))))
            worst = max(worst, 1 - abs(overlap(dome_state(n), BiphotonState(m[:, 1]))))
        return worst

    check("lifted rotations trace sphere and dome", 1e-10, lift_matches_orbits)
    check("classify round trip (radians)", 1e-6, lambda: _classify_roundtrip(rng, 1000), "1000 directions")

    def umbrella_on_dome():
        worst = 0.0
        for v in umbrella_basis():
            c = classify_state(v)
            if c.manifold is not Manifold.DOME:
                return math.inf
            worst = max(worst, abs(c.direction.theta - TETRA_ANGLE))
        return worst

    check("umbrella vectors on the dome at arccos(1/sqrt 3)", 1e-8, umbrella_on_dome)
    return results


def summary(results: List[CheckResult]) -> dict:
    failures = [r.name for r in results if not r.passed]
    return {
        "version": settings.VERSION,
        "passed": not failures,
        "failures": failures,
        "checks": [dict(asdict(r), passed=r.passed) for r in results],
    }


if __name__ == "__main__":
    for r in run_suite(n_pairs=1000):
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name}: {r.residual:.3e} {r.detail}")
