"""Random hotspot topologies: user placement, path loss and Rayleigh channels."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PATH_LOSS_OFFSET_DB = 37.6
PATH_LOSS_SLOPE_DB = 36.8

# Distinct users closer than this are pushed apart to dodge the path-loss
# singularity at d -> 0.
MIN_PAIR_DISTANCE_M = 1.0


class InvalidDistanceError(ValueError):
    """Distance fed to the path-loss law must be strictly positive."""


def dbm_to_watt(power_dbm: float) -> float:
    return 10.0 ** ((power_dbm - 30.0) / 10.0)


@dataclass
class SimGeometry:
    """Square hotspot layout parameters."""

    side_m: float = 100.0
    num_users: int = 30
    d2d_radius_m: float = 30.0

    def validate(self) -> None:
        if self.side_m <= 0:
            raise ValueError(f"side_m must be positive, got {self.side_m}")
        if self.num_users < 2:
            raise ValueError(f"num_users must be >= 2, got {self.num_users}")
        if not 0.0 < self.d2d_radius_m <= self.side_m * math.sqrt(2.0):
            raise ValueError(
                f"d2d_radius_m must lie in (0, side*sqrt(2)], got {self.d2d_radius_m}"
            )


@dataclass
class Topology:
    """One channel realization: positions, pairwise distances and complex gains.

    ``channels[i, j]`` is the coefficient seen when user i transmits to user j;
    the diagonal is unused (zeroed).  ``channels[i, j]`` and ``channels[j, i]``
    are drawn independently.
    """

    positions: np.ndarray  # (K, 2) metres
    distances: np.ndarray  # (K, K) metres, symmetric, zero diagonal
    channels: np.ndarray   # (K, K) complex linear amplitudes

    @property
    def num_users(self) -> int:
        return self.positions.shape[0]

    def gain(self, tx: int, rx: int) -> float:
        """Linear power gain of the tx -> rx channel."""
        return float(np.abs(self.channels[tx, rx]) ** 2)


def place_users(geometry: SimGeometry, rng: np.random.Generator) -> np.ndarray:
    """Drop users i.i.d. uniformly over the square hotspot."""
    return rng.uniform(0.0, geometry.side_m, size=(geometry.num_users, 2))


def path_loss_db(distance_m):
    """Distance-dependent path loss in dB, 37.6 + 36.8*log10(d)."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0.0):
        raise InvalidDistanceError(f"distance must be > 0, got {distance_m}")
    out = PATH_LOSS_OFFSET_DB + PATH_LOSS_SLOPE_DB * np.log10(d)
    return float(out) if np.isscalar(distance_m) else out


def path_gain(distance_m):
    """Linear power gain 10^(-PL/10) at the given distance."""
    return 10.0 ** (-np.asarray(path_loss_db(distance_m)) / 10.0)


def draw_channel(distance_m, rng: np.random.Generator, size=None):
    """Draw a Rayleigh-faded coefficient with mean power 10^(-PL(d)/10)."""
    gain = path_gain(distance_m)
    shape = np.shape(gain) if size is None else size
    fading = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    h = np.sqrt(gain / 2.0) * fading
    return complex(h) if (size is None and np.isscalar(distance_m)) else h


def build_topology(geometry: SimGeometry, rng: np.random.Generator) -> Topology:
    """Generate positions and the full K x K channel matrix for one drop."""
    positions = place_users(geometry, rng)
    diff = positions[:, None, :] - positions[None, :, :]
    distances = np.sqrt(np.sum(diff**2, axis=-1))
    off_diag = ~np.eye(geometry.num_users, dtype=bool)
    distances[off_diag] = np.maximum(distances[off_diag], MIN_PAIR_DISTANCE_M)

    amplitude = np.zeros_like(distances)
    amplitude[off_diag] = np.sqrt(path_gain(distances[off_diag]))
    fading = rng.standard_normal((geometry.num_users, geometry.num_users, 2))
    channels = amplitude * (fading[..., 0] + 1j * fading[..., 1]) / np.sqrt(2.0)
    np.fill_diagonal(channels, 0.0)
    return Topology(positions=positions, distances=distances, channels=channels)
