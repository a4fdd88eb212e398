from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import DimensionMismatchError, NonUnitaryError

logger = logging.getLogger(__name__)

NORM_TOL = 1e-12
SAME_STATE_TOL = 1e-9
UNITARY_TOL = 1e-10
CLASSIFY_TOL = 1e-8

SQRT2 = math.sqrt(2.0)

# spin-1 operators over the Fock basis {|2,0>, |1,1>, |0,2>}
SPIN_X = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / SQRT2
SPIN_Y = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) / SQRT2
SPIN_Z = np.diag([1.0, 0.0, -1.0]).astype(complex)
SPIN = (SPIN_X, SPIN_Y, SPIN_Z)


@dataclass(frozen=True, eq=False)
class BiphotonState:
    """Normalized complex amplitudes; d=3 over the Fock basis, d=2 for qubits.

    Two states are the same physical state when |<u|v>| = 1, see `same_as`.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).ravel()
        amps.setflags(write=False)
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, values, normalize: bool = False) -> "BiphotonState":
        amps = np.asarray(values, dtype=complex).ravel()
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def same_as(self, other: "BiphotonState", tol: float = SAME_STATE_TOL) -> bool:
        if self.dim != other.dim:
            return False
        return abs(abs(overlap(self, other)) - 1.0) <= tol

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)

    def __repr__(self):
        parts = ", ".join(f"{a.real:+.6f}{a.imag:+.6f}j" for a in self.amplitudes)
        return f"BiphotonState({parts})"


@dataclass(frozen=True)
class Rotation:
    theta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError(f"theta out of [0, pi]: {self.theta}")
        phi = float(self.phi) % (2 * math.pi)
        # phi is meaningless at the north pole
        if self.theta == 0.0:
            phi = 0.0
        object.__setattr__(self, "phi", phi)


@dataclass(frozen=True, eq=False)
class Direction:
    """Unit vector on the Poincare sphere; (theta, phi) derived on demand."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        norm = math.sqrt(self.x ** 2 + self.y ** 2 + self.z ** 2)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"direction is not a unit vector (|n| = {norm!r})")

    @classmethod
    def from_vector(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float)
        v = v / np.linalg.norm(v)
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "Direction":
        st = math.sin(theta)
        return cls.from_vector((st * math.cos(phi), st * math.sin(phi), math.cos(theta)))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def theta(self) -> float:
        return math.acos(max(-1.0, min(1.0, self.z)))

    @property
    def phi(self) -> float:
        if math.hypot(self.x, self.y) < 1e-12:
            return 0.0
        return math.atan2(self.y, self.x) % (2 * math.pi)

    def angle_to(self, other: "Direction") -> float:
        c = float(np.dot(self.vector, other.vector))
        return math.acos(max(-1.0, min(1.0, c)))

    def upper(self) -> "Direction":
        # representative of the antipodal pair on the upper dome
        for comp in (self.z, self.y, self.x):
            if abs(comp) > 1e-12:
                return self if comp > 0 else -self
        return self

    def __neg__(self) -> "Direction":
        return Direction(-self.x, -self.y, -self.z)

    def __repr__(self):
        return f"Direction({self.x:+.6f}, {self.y:+.6f}, {self.z:+.6f})"


NORTH = Direction(0.0, 0.0, 1.0)
X_AXIS = Direction(1.0, 0.0, 0.0)
Y_AXIS = Direction(0.0, 1.0, 0.0)


def rotation_matrix(r: Rotation) -> np.ndarray:
    c = math.cos(r.theta / 2)
    s = math.sin(r.theta / 2)
    e = complex(math.cos(r.phi), math.sin(r.phi))
    return np.array([[c, -s * e.conjugate()], [s * e, c]], dtype=complex)


def is_unitary(m: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    m = np.asarray(m)
    return bool(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) <= tol)


def lift_su2(u: np.ndarray) -> np.ndarray:
    """Symmetric spin-1 lift of a single-photon unitary, acting on both photons."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise DimensionMismatchError(f"expected a 2x2 matrix, got {u.shape}")
    if not is_unitary(u):
        raise NonUnitaryError("single-photon operation is not unitary")
    a, b = u[0]
    c, d = u[1]
    return np.array(
        [
            [a * a, SQRT2 * a * b, b * b],
            [SQRT2 * a * c, a * d + b * c, SQRT2 * b * d],
            [c * c, SQRT2 * c * d, d * d],
        ],
        dtype=complex,
    )


# orbit of |2,0> under single-photon operations, in angles
def sphere_amplitudes(theta: float, phi: float) -> np.ndarray:
    e = np.exp(1j * phi)
    return np.array(
        [math.cos(theta / 2) ** 2, math.sin(theta) / SQRT2 * e, math.sin(theta / 2) ** 2 * e * e]
    )


# orbit of |1,1>; the sign pattern keeps dome(n) orthogonal to sphere(+-n)
def dome_amplitudes(theta: float, phi: float) -> np.ndarray:
    e = np.exp(1j * phi)
    return np.array(
        [-math.sin(theta) / SQRT2, math.cos(theta) * e, math.sin(theta) / SQRT2 * e * e]
    )


def sphere_state(n: Direction) -> BiphotonState:
    return BiphotonState(sphere_amplitudes(n.theta, n.phi))


def dome_state(n: Direction) -> BiphotonState:
    return BiphotonState(dome_amplitudes(n.theta, n.phi))


def overlap(u: BiphotonState, v: BiphotonState) -> complex:
    if u.dim != v.dim:
        raise DimensionMismatchError(f"cannot overlap d={u.dim} with d={v.dim}")
    return complex(np.vdot(u.amplitudes, v.amplitudes))


def state_distance(u: BiphotonState, v: BiphotonState) -> float:
    return 1.0 - abs(overlap(u, v))


class Manifold(enum.Enum):
    SPHERE = "sphere"
    DOME = "dome"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class Classification:
    manifold: Manifold
    direction: Optional[Direction] = None
    distance: float = 0.0

    @property
    def in_subset(self) -> bool:
        return self.manifold is not Manifold.OUTSIDE


def spin_expectation(s: BiphotonState) -> np.ndarray:
    v = s.amplitudes
    return np.array([np.vdot(v, op @ v).real for op in SPIN])


def classify_state(s: BiphotonState) -> Classification:
    """Find the sphere or dome point a qutrit state sits on, if any.

    Sphere states carry <S> = n. Dome states have <S> = 0 and n is the null
    direction of the symmetrized second moment <S_i S_j>.
    """
    if s.dim != 3:
        raise DimensionMismatchError("only biphoton qutrit states can be classified")
    v = s.amplitudes
    best = Classification(Manifold.OUTSIDE, None, 1.0)

    spin = spin_expectation(s)
    if np.linalg.norm(spin) > 1e-9:
        n = Direction.from_vector(spin)
        dist = state_distance(sphere_state(n), s)
        if dist < CLASSIFY_TOL:
            return Classification(Manifold.SPHERE, n, dist)
        best = Classification(Manifold.OUTSIDE, None, dist)

    moments = np.array([[np.vdot(v, a @ b @ v).real for b in SPIN] for a in SPIN])
    moments = (moments + moments.T) / 2
    _, vecs = np.linalg.eigh(moments)
    n = Direction.from_vector(vecs[:, 0]).upper()
    dist = state_distance(dome_state(n), s)
    if dist < CLASSIFY_TOL:
        return Classification(Manifold.DOME, n, dist)

    return Classification(Manifold.OUTSIDE, None, min(best.distance, dist))


def random_direction(rng: np.random.Generator) -> Direction:
    v = rng.normal(size=3)
    while np.linalg.norm(v) < 1e-8:
        v = rng.normal(size=3)
    return Direction.from_vector(v)
