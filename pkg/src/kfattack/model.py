"""Linear dynamic system, sensor models and the DWNA tracking instance.

Matrices are plain dense ``numpy`` float arrays. Every array stored on a
model object is copied and marked read-only so instances behave as
immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError

SYMMETRY_RTOL = 1e-8
PSD_ATOL = 1e-10


def _frozen(a, ndim=2) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    if ndim == 2:
        arr = np.atleast_2d(arr)
    else:
        arr = np.atleast_1d(arr)
    if arr.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def symmetrize(a, name="matrix") -> np.ndarray:
    """Return ``(A + A.T) / 2`` after checking ``A`` is square and nearly symmetric.

    Asymmetry larger than ``1e-8`` relative to the largest entry is an error.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    scale = max(float(np.max(np.abs(a))), 1.0) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_RTOL * scale:
        raise ValidationError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def min_eig(a) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(np.asarray(a, dtype=float))[0])


@dataclass(frozen=True)
class StateSpaceModel:
    """Time-invariant plant ``x[k+1] = F x[k] + G u[k] + v[k]``, ``v ~ N(0, Q)``."""

    f: np.ndarray
    q: np.ndarray
    g: np.ndarray | None = None
    u: np.ndarray | None = None

    def __post_init__(self):
        f = _frozen(self.f)
        n = f.shape[0]
        if f.shape != (n, n):
            raise DimensionError(f"F must be square, got {f.shape}")
        q = symmetrize(self.q, "Q")
        if q.shape != (n, n):
            raise DimensionError(f"Q must be {n}x{n}, got {q.shape}")
        if min_eig(q) < -PSD_ATOL:
            raise ValidationError("Q must be positive semidefinite")
        g = _frozen(np.zeros((n, 1)) if self.g is None else self.g)
        u = _frozen(np.zeros(g.shape[1]) if self.u is None else self.u, ndim=1)
        if g.shape[0] != n or g.shape[1] != u.shape[0]:
            raise DimensionError(f"G {g.shape} incompatible with u {u.shape} / dim_x {n}")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "q", _frozen(q))
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "u", u)

    @property
    def dim_x(self) -> int:
        return self.f.shape[0]


@dataclass(frozen=True)
class Sensor:
    """A linear sensor ``z = H x + w`` with ``w ~ N(0, R)``."""

    h: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        h = _frozen(self.h)
        r = symmetrize(self.r, "R")
        if r.shape[0] != h.shape[0]:
            raise DimensionError(f"R {r.shape} does not match H rows {h.shape[0]}")
        if min_eig(r) <= 0.0:
            raise ValidationError("R must be positive definite")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "r", _frozen(r))

    @property
    def dim_z(self) -> int:
        return self.h.shape[0]

    @property
    def dim_x(self) -> int:
        return self.h.shape[1]

    @classmethod
    def position(cls, variance: float) -> "Sensor":
        """Position-only sensor for the 2-state DWNA model."""
        return cls(h=[[1.0, 0.0]], r=[[variance]])

    @classmethod
    def position_velocity(cls, var_p: float, var_v: float) -> "Sensor":
        """Sensor measuring both position and velocity with independent noise."""
        return cls(h=np.eye(2), r=np.diag([var_p, var_v]))


@dataclass(frozen=True)
class SensorSuite:
    sensors: tuple[Sensor, ...] = field(default_factory=tuple)

    def __post_init__(self):
        sensors = tuple(self.sensors)
        if not sensors:
            raise ValidationError("a sensor suite needs at least one sensor")
        dims = {s.dim_x for s in sensors}
        if len(dims) != 1:
            raise DimensionError(f"sensors disagree on state dimension: {sorted(dims)}")
        object.__setattr__(self, "sensors", sensors)

    def __len__(self):
        return len(self.sensors)

    def __iter__(self):
        return iter(self.sensors)

    def __getitem__(self, i):
        return self.sensors[i]

    @property
    def dim_x(self) -> int:
        return self.sensors[0].dim_x

    @property
    def dims_z(self) -> list[int]:
        return [s.dim_z for s in self.sensors]


@dataclass(frozen=True)
class TrackingParams:
    """Sampling interval ``t`` (s) and acceleration-noise variance ``sigma_v2``."""

    t: float = 1.0
    sigma_v2: float = 0.25

    def __post_init__(self):
        if not self.t > 0:
            raise ValidationError(f"sampling interval must be positive, got {self.t}")
        if not self.sigma_v2 >= 0:
            raise ValidationError(f"sigma_v2 must be non-negative, got {self.sigma_v2}")


def dwna_gamma(t: float) -> np.ndarray:
    """Noise gain column ``[t^2/2, t]`` of the DWNA model."""
    return np.array([[0.5 * t * t], [t]])


def build_dwna_model(params: TrackingParams) -> StateSpaceModel:
    """Discrete white-noise acceleration model for 1-D (position, velocity) tracking."""
    t = params.t
    gamma = dwna_gamma(t)
    return StateSpaceModel(
        f=np.array([[1.0, t], [0.0, 1.0]]),
        q=params.sigma_v2 * (gamma @ gamma.T),
        g=np.zeros((2, 1)),
        u=np.zeros(1),
    )


def stack_suite(suite: SensorSuite) -> tuple[np.ndarray, np.ndarray]:
    """Stack measurement matrices vertically and noise covariances block-diagonally."""
    h = np.vstack([s.h for s in suite])
    dims = suite.dims_z
    r = np.zeros((sum(dims), sum(dims)))
    i = 0
    for s, d in zip(suite, dims):
        r[i:i + d, i:i + d] = s.r
        i += d
    return h, r


def corrupt_measurement(z, b) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    b = np.asarray(b, dtype=float)
    if z.shape != b.shape:
        raise DimensionError(f"measurement {z.shape} and bias {b.shape} differ in shape")
    return z + b
