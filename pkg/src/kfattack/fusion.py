"""Reduce a multi-sensor suite to one equivalent measurement.

Two reductions are provided. When every sensor shares the same ``H``, the
equivalent sensor keeps that ``H`` and the measurements are averaged with
inverse-covariance weights. When the suite as a whole observes the full
state (invertible Fisher information), the equivalent sensor measures the
state directly (``H_e = I``).

In both cases the fused sensor carries exactly the Fisher information of the
suite, so a Kalman filter fed with it produces the same covariances as one
fed with the stacked measurements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError, ValidationError
from .model import SensorSuite

FISHER_COND_MAX = 1e12


@dataclass(frozen=True)
class EquivalentSensor:
    h_e: np.ndarray
    r_e: np.ndarray
    weights: tuple[np.ndarray, ...]

    @property
    def combiner(self) -> np.ndarray:
        """Horizontal concatenation ``[C_1 ... C_M]`` mapping stacked measurements to ``z_e``."""
        return np.hstack(self.weights)

    def measurement(self, zs) -> np.ndarray:
        """Fuse per-sensor measurements (or biases) ``zs`` into ``z_e = sum_i C_i z_i``."""
        if len(zs) != len(self.weights):
            raise DimensionError(f"expected {len(self.weights)} measurements, got {len(zs)}")
        return sum(c @ np.atleast_1d(np.asarray(z, dtype=float)) for c, z in zip(self.weights, zs))


def _inv(a, what):
    try:
        return np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular {what}") from exc


def fuse_identical_h(suite: SensorSuite) -> EquivalentSensor:
    h = suite[0].h
    for i, s in enumerate(suite):
        if s.h.shape != h.shape or not np.array_equal(s.h, h):
            raise ValidationError(f"sensor {i} has a different measurement matrix")
    r_invs = [_inv(s.r, f"R of sensor {i}") for i, s in enumerate(suite)]
    r_e = _inv(sum(r_invs), "information sum")
    r_e = 0.5 * (r_e + r_e.T)
    weights = tuple(r_e @ ri for ri in r_invs)
    return EquivalentSensor(h_e=h.copy(), r_e=r_e, weights=weights)


def fisher_information(suite: SensorSuite) -> np.ndarray:
    return sum(s.h.T @ np.linalg.solve(s.r, s.h) for s in suite)


def fuse_observable(suite: SensorSuite) -> EquivalentSensor:
    fisher = fisher_information(suite)
    if np.linalg.cond(fisher) >= FISHER_COND_MAX:
        raise NumericalError("Fisher information is singular: the suite does not observe the full state")
    r_e = np.linalg.inv(fisher)
    r_e = 0.5 * (r_e + r_e.T)
    weights = tuple(r_e @ s.h.T @ np.linalg.inv(s.r) for s in suite)
    return EquivalentSensor(h_e=np.eye(suite.dim_x), r_e=r_e, weights=weights)


def equivalent_bias_covariance(sensor: EquivalentSensor, sigma) -> np.ndarray:
    """Covariance ``C Sigma C^T`` of the fused bias ``b_e = sum_i C_i b_i``.

    ``sigma`` is the covariance of the stacked bias vector, given either as
    an array or as an object exposing ``.matrix`` (a ``BiasCovariance``).
    """
    s = np.asarray(getattr(sigma, "matrix", sigma), dtype=float)
    c = sensor.combiner
    if s.shape != (c.shape[1], c.shape[1]):
        raise DimensionError(f"bias covariance {s.shape} does not match stacked dimension {c.shape[1]}")
    out = c @ s @ c.T
    return 0.5 * (out + out.T)
