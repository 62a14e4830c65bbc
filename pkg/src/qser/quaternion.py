"""Quaternion value type and its algebra.

A quaternion is stored as ``(r, i, j, k)``: real part first, then the three
imaginary components. All values are immutable; operations return new ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

GRAY_AXIS = (1.0 / math.sqrt(3.0),) * 3


@dataclass(frozen=True)
class Quaternion:
    r: float = 0.0
    i: float = 0.0
    j: float = 0.0
    k: float = 0.0

    @classmethod
    def pure(cls, x: float, y: float, z: float) -> "Quaternion":
        return cls(0.0, float(x), float(y), float(z))

    @property
    def vector(self) -> tuple[float, float, float]:
        return (self.i, self.j, self.k)

    @property
    def is_pure(self) -> bool:
        return self.r == 0.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.r, self.i, self.j, self.k)

    def __add__(self, other: "Quaternion") -> "Quaternion":
        return add(self, other)

    def __neg__(self) -> "Quaternion":
        return scale(-1.0, self)

    def __sub__(self, other: "Quaternion") -> "Quaternion":
        return add(self, -other)

    def __mul__(self, other):
        if isinstance(other, Quaternion):
            return hamilton(self, other)
        return scale(other, self)

    def __rmul__(self, other):
        return scale(other, self)


ONE = Quaternion(1.0, 0.0, 0.0, 0.0)
I = Quaternion(0.0, 1.0, 0.0, 0.0)
J = Quaternion(0.0, 0.0, 1.0, 0.0)
K = Quaternion(0.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class UnitAxisQuaternion:
    """Rotation by ``theta`` radians about a unit ``axis``.

    Use :meth:`from_axis_angle` to build one from an unnormalised axis.
    """

    theta: float
    axis: tuple[float, float, float]

    def __post_init__(self):
        if not -math.pi <= self.theta <= math.pi:
            raise DomainError(f"theta must lie in [-pi, pi], got {self.theta}")
        n = math.sqrt(sum(a * a for a in self.axis))
        if abs(n - 1.0) > 1e-12:
            raise DomainError(f"axis must have unit norm, got norm {n}")

    @classmethod
    def from_axis_angle(cls, axis, theta: float) -> "UnitAxisQuaternion":
        a = [float(x) for x in axis]
        n = math.sqrt(sum(x * x for x in a))
        if n == 0.0:
            raise DomainError("rotation axis must be non-zero")
        return cls(float(theta), (a[0] / n, a[1] / n, a[2] / n))

    def to_quaternion(self) -> Quaternion:
        c = math.cos(self.theta / 2.0)
        s = math.sin(self.theta / 2.0)
        return Quaternion(c, s * self.axis[0], s * self.axis[1], s * self.axis[2])


def add(a: Quaternion, b: Quaternion) -> Quaternion:
    return Quaternion(a.r + b.r, a.i + b.i, a.j + b.j, a.k + b.k)


def scale(x: float, q: Quaternion) -> Quaternion:
    return Quaternion(x * q.r, x * q.i, x * q.j, x * q.k)


def hamilton(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product ``a * b`` (non-commutative)."""
    return Quaternion(
        a.r * b.r - a.i * b.i - a.j * b.j - a.k * b.k,
        a.r * b.i + a.i * b.r + a.j * b.k - a.k * b.j,
        a.r * b.j - a.i * b.k + a.j * b.r + a.k * b.i,
        a.r * b.k + a.i * b.j - a.j * b.i + a.k * b.r,
    )


def conjugate(q: Quaternion) -> Quaternion:
    return Quaternion(q.r, -q.i, -q.j, -q.k)


def norm(q: Quaternion) -> float:
    return math.sqrt(q.r * q.r + q.i * q.i + q.j * q.j + q.k * q.k)


def inverse(q: Quaternion) -> Quaternion:
    n2 = q.r * q.r + q.i * q.i + q.j * q.j + q.k * q.k
    if n2 == 0.0:
        raise DomainError("zero quaternion has no inverse")
    return scale(1.0 / n2, conjugate(q))


def rotate(p: UnitAxisQuaternion, q: Quaternion) -> Quaternion:
    """Sandwich product ``p q p^-1``; rotates the imaginary part of ``q``."""
    pq = p.to_quaternion()
    return hamilton(pq, hamilton(q, inverse(pq)))


# Array forms over a trailing axis of length 4, used by the layers.


def hamilton_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ar, ai, aj, ak = np.moveaxis(a, -1, 0)
    br, bi, bj, bk = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            ar * br - ai * bi - aj * bj - ak * bk,
            ar * bi + ai * br + aj * bk - ak * bj,
            ar * bj - ai * bk + aj * br + ak * bi,
            ar * bk + ai * bj - aj * bi + ak * br,
        ],
        axis=-1,
    )


def conjugate_array(q: np.ndarray) -> np.ndarray:
    out = np.array(q, dtype=np.float64, copy=True)
    out[..., 1:] *= -1.0
    return out


def gray_rotation_matrix(theta: np.ndarray) -> np.ndarray:
    """3x3 matrices rotating by ``theta`` about the gray axis (1,1,1)/sqrt(3).

    Returns an array of shape ``theta.shape + (3, 3)`` acting on column vectors.
    """
    theta = np.asarray(theta, dtype=np.float64)
    c = np.cos(theta)[..., None, None]
    s = np.sin(theta)[..., None, None]
    return c * _EYE + s * _GRAY_CROSS + (1.0 - c) * _GRAY_OUTER


def gray_rotation_matrix_dtheta(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    c = np.cos(theta)[..., None, None]
    s = np.sin(theta)[..., None, None]
    return -s * _EYE + c * _GRAY_CROSS + s * _GRAY_OUTER


_EYE = np.eye(3)
_u = np.array(GRAY_AXIS)
_GRAY_OUTER = np.outer(_u, _u)
_GRAY_CROSS = np.array(
    [
        [0.0, -_u[2], _u[1]],
        [_u[2], 0.0, -_u[0]],
        [-_u[1], _u[0], 0.0],
    ]
)
