from __future__ import annotations

import functools
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Sequence, Tuple

import numpy as np

from errors import DimensionMismatchError, UnknownProtocolError
from state_geometry import (
    NORTH,
    X_AXIS,
    Y_AXIS,
    BiphotonState,
    Direction,
    dome_state,
    overlap,
    sphere_state,
)

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-12

TAU = complex(math.cos(2 * math.pi / 3), math.sin(2 * math.pi / 3))


@dataclass(frozen=True, eq=False)
class Basis:
    name: str
    vectors: Tuple[BiphotonState, ...]

    def __post_init__(self):
        vectors = tuple(self.vectors)
        object.__setattr__(self, "vectors", vectors)
        dims = {v.dim for v in vectors}
        if len(dims) != 1 or dims.pop() != len(vectors):
            raise DimensionMismatchError(f"basis {self.name!r} needs d vectors of dimension d")
        gram = self.matrix.conj().T @ self.matrix
        err = float(np.max(np.abs(gram - np.eye(self.dim))))
        if err > ORTHONORMAL_TOL:
            raise ValueError(f"basis {self.name!r} is not orthonormal (residual {err:.3e})")

    @property
    def dim(self) -> int:
        return len(self.vectors)

    @property
    def matrix(self) -> np.ndarray:
        # column s holds vector s
        return np.column_stack([v.amplitudes for v in self.vectors])

    def __iter__(self):
        return iter(self.vectors)

    def __len__(self):
        return len(self.vectors)


@dataclass(frozen=True, eq=False)
class Protocol:
    name: str
    dimension: int
    bases: Tuple[Basis, ...] = field(default_factory=tuple)

    def __post_init__(self):
        bases = tuple(self.bases)
        object.__setattr__(self, "bases", bases)
        if self.dimension not in (2, 3):
            raise ValueError(f"unsupported dimension {self.dimension}")
        if len(bases) < 2:
            raise ValueError(f"protocol {self.name!r} needs at least two bases")
        for b in bases:
            if b.dim != self.dimension:
                raise DimensionMismatchError(
                    f"basis {b.name!r} has dimension {b.dim}, protocol {self.name!r} is d={self.dimension}"
                )

    @property
    def n_bases(self) -> int:
        return len(self.bases)

    def tensor(self) -> np.ndarray:
        """Basis vectors stacked as (basis, vector, component)."""
        return np.stack([b.matrix.T for b in self.bases])


def computational_basis(d: int, name: str = "computational") -> Basis:
    return Basis(name, tuple(BiphotonState(row) for row in np.eye(d)))


# |2,0>, |1,1>, |0,2>
def measurement_basis() -> Basis:
    return computational_basis(3, "measurement")


def umbrella_basis() -> Basis:
    vectors = (
        (1, 1, -1),
        (1, TAU, -(TAU ** 2)),
        (1, TAU ** 2, -TAU),
    )
    return Basis("umbrella", tuple(BiphotonState(np.array(v) / math.sqrt(3)) for v in vectors))


def umbrella_protocol() -> Protocol:
    return Protocol("umbrella", 3, (measurement_basis(), umbrella_basis()))


def ray_basis(n: Direction, name: str | None = None) -> Basis:
    # the three points a ray through the centre cuts: sphere(n), sphere(-n), dome(n)
    if name is None:
        name = f"ray({n.x:+.4f},{n.y:+.4f},{n.z:+.4f})"
    return Basis(name, (sphere_state(n), sphere_state(-n), dome_state(n)))


def tetrahedral_directions() -> Tuple[Direction, ...]:
    signs = ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))
    return tuple(Direction.from_vector(s) for s in signs)


def three_rays_protocol() -> Protocol:
    bases = (ray_basis(NORTH, "ray-z"), ray_basis(X_AXIS, "ray-x"), ray_basis(Y_AXIS, "ray-y"))
    return Protocol("three-rays", 3, bases)


def seven_rays_protocol() -> Protocol:
    tetra = tuple(
        ray_basis(n, f"ray-t{i}") for i, n in enumerate(tetrahedral_directions(), start=1)
    )
    return Protocol("seven-rays", 3, three_rays_protocol().bases + tetra)


def mub_basis(d: int, t: int) -> Basis:
    """Basis t of the prime-dimension MUB family; t = 0 is computational.

    Components are omega^(r s) * xi^((t-1) r^2) / sqrt(d) with xi = omega for odd
    d and xi = i for d = 2, where the quadratic phase over Z_2 degenerates.
    """
    if t == 0:
        return computational_basis(d)
    omega = np.exp(2j * np.pi / d)
    xi = 1j if d == 2 else omega
    r = np.arange(d)
    vectors = []
    for s in range(d):
        amps = omega ** ((r * s) % d) * xi ** (((t - 1) * r * r) % (4 if d == 2 else d))
        vectors.append(BiphotonState(amps / math.sqrt(d)))
    label = "fourier" if t == 1 else f"mub{t}"
    return Basis(label, tuple(vectors))


def mub_protocol(d: int, m: int, name: str | None = None) -> Protocol:
    if d not in (2, 3):
        raise ValueError(f"MUB construction supports d in {{2, 3}}, got {d}")
    if not 2 <= m <= d + 1:
        raise ValueError(f"number of bases must be in [2, {d + 1}] for d={d}, got {m}")
    if name is None:
        name = f"{'qubit' if d == 2 else 'qutrit'}-{m}mub"
    return Protocol(name, d, tuple(mub_basis(d, t) for t in range(m)))


def unbiasedness_matrix(a: Basis, b: Basis) -> np.ndarray:
    if a.dim != b.dim:
        raise DimensionMismatchError(f"bases {a.name!r} and {b.name!r} differ in dimension")
    return np.abs(a.matrix.conj().T @ b.matrix) ** 2


def is_orthonormal(basis: Basis, tol: float = ORTHONORMAL_TOL) -> bool:
    gram = basis.matrix.conj().T @ basis.matrix
    return bool(np.max(np.abs(gram - np.eye(basis.dim))) <= tol)


def same_state_set(a: Sequence[BiphotonState], b: Sequence[BiphotonState], tol: float = 1e-9) -> bool:
    # unordered comparison, each state modulo its own global phase
    if len(a) != len(b):
        return False
    unmatched = list(b)
    for u in a:
        for i, v in enumerate(unmatched):
            if u.same_as(v, tol):
                del unmatched[i]
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class InfeasibilityCertificate:
    patterns_checked: int
    feasible_patterns: int
    min_abs_row_dot: float
    min_max_violation: float
    single_triplet_orthonormal: bool

    @property
    def proven(self) -> bool:
        return self.feasible_patterns == 0 and self.single_triplet_orthonormal


def dome_mub_pair_infeasibility() -> InfeasibilityCertificate:
    """Exhaustive proof that two dome triplets cannot be mutually unbiased.

    Dome overlaps are |cos| of the angle between directions, so a second
    unbiased triplet needs a rotation matrix with every entry +-1/sqrt(3).
    None of the 2^9 sign patterns has orthogonal rows.
    """
    scale = 1 / math.sqrt(3)
    pairs = ((0, 1), (0, 2), (1, 2))
    checked = feasible = 0
    min_dot = math.inf
    min_violation = math.inf
    for signs in itertools.product((-1.0, 1.0), repeat=9):
        m = np.array(signs).reshape(3, 3) * scale
        dots = [abs(float(m[i] @ m[j])) for i, j in pairs]
        checked += 1
        if max(dots) < 1e-12:
            feasible += 1
        min_dot = min(min_dot, min(dots))
        min_violation = min(min_violation, max(dots))

    triplet = Basis("dome-axes", (dome_state(X_AXIS), dome_state(Y_AXIS), dome_state(NORTH)))
    logger.debug("sign patterns checked=%d feasible=%d", checked, feasible)
    return InfeasibilityCertificate(checked, feasible, min_dot, min_violation, is_orthonormal(triplet))


# Registry names exposed to the command line
_CONSTRUCTORS: Dict[str, Callable[[], Protocol]] = {
    "bb84": lambda: mub_protocol(2, 2, "bb84"),
    "qubit-3mub": lambda: mub_protocol(2, 3, "qubit-3mub"),
    "umbrella": umbrella_protocol,
    "three-rays": three_rays_protocol,
    "seven-rays": seven_rays_protocol,
    "qutrit-3mub": lambda: mub_protocol(3, 3, "qutrit-3mub"),
    "qutrit-4mub": lambda: mub_protocol(3, 4, "qutrit-4mub"),
}

PROTOCOL_NAMES = tuple(_CONSTRUCTORS)

# protocols whose coherent-attack rate is computed by keyrate
KEYRATE_PROTOCOLS = ("bb84", "qubit-3mub", "umbrella", "qutrit-3mub", "qutrit-4mub")


@functools.lru_cache(maxsize=None)
def get_protocol(name: str) -> Protocol:
    try:
        build = _CONSTRUCTORS[name]
    except KeyError:
        raise UnknownProtocolError(
            f"unknown protocol {name!r}; choose one of {', '.join(PROTOCOL_NAMES)}"
        ) from None
    return build()


def registry() -> Dict[str, Protocol]:
    return {name: get_protocol(name) for name in PROTOCOL_NAMES}
