"""Wireless geometry, large-scale gain, per-round Rayleigh fading and noise.

All powers and variances are linear watts internally; dB / dBm appear only at
the configuration boundary. A complex noise element of variance ``s2`` has
real and imaginary parts of variance ``s2 / 2`` each.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .rng import RngSpec, standard_complex

# Large-scale gain model constants (urban macro, distances in km).
_PATH_GAIN_INTERCEPT_DB = -139.2
_PATH_GAIN_SLOPE = 35.0


@dataclass(frozen=True)
class DeviceGeometry:
    """Static per-device placement: distance (km) and shadowing (dB)."""

    distances_km: np.ndarray
    shadow_db: np.ndarray

    def __post_init__(self):
        if self.distances_km.shape != self.shadow_db.shape:
            raise ConfigError("distances and shadowing must have equal length")

    @property
    def n_devices(self) -> int:
        return self.distances_km.shape[0]

    def path_gain_linear(self) -> np.ndarray:
        """Per-device large-scale power gain (linear)."""
        return db_to_linear(path_gain_db(self.distances_km, self.shadow_db))


@dataclass(frozen=True)
class ChannelState:
    """Per-round channel vectors, one length-N complex vector per device.

    The same vectors govern downlink and uplink within the round (TDD
    reciprocity).
    """

    h: np.ndarray  # (K, N) complex
    round_index: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.h.view(float))):
            raise DomainError("channel vectors must be finite")

    @property
    def n_devices(self) -> int:
        return self.h.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.h.shape[1]


@dataclass(frozen=True)
class NoiseParams:
    """Receiver noise variances per complex element (watts)."""

    sigma2_dl: float
    sigma2_ul: float

    def __post_init__(self):
        if self.sigma2_dl < 0 or self.sigma2_ul < 0:
            raise ConfigError("noise variances must be nonnegative")


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        raise DomainError("power must be positive for dBm conversion")
    return 10.0 * np.log10(watts) + 30.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def gen_topology(
    n_devices: int,
    d_range_km: tuple[float, float],
    shadow_std_db: float,
    rng: RngSpec,
) -> DeviceGeometry:
    """Place devices uniformly on the distance range with log-normal shadowing.

    Geometry is drawn once and held fixed across rounds; only small-scale
    fading is redrawn per round.
    """
    d_min, d_max = float(d_range_km[0]), float(d_range_km[1])
    if n_devices < 1:
        raise ConfigError("need at least one device")
    if not (0.0 < d_min <= d_max) or not np.isfinite(d_max):
        raise ConfigError(f"invalid distance range ({d_min}, {d_max})")
    if shadow_std_db < 0:
        raise ConfigError("shadowing standard deviation must be >= 0")
    gen = rng.stream("geometry")
    distances = gen.uniform(d_min, d_max, size=n_devices)
    shadow = gen.normal(0.0, shadow_std_db, size=n_devices) if shadow_std_db > 0 else np.zeros(n_devices)
    return DeviceGeometry(distances_km=distances, shadow_db=shadow)


def path_gain_db(d_km, shadow_db):
    """Large-scale gain in dB: intercept - slope * log10(d) - shadowing."""
    d = np.asarray(d_km, dtype=float)
    if np.any(d <= 0):
        raise DomainError("distance must be positive")
    return _PATH_GAIN_INTERCEPT_DB - _PATH_GAIN_SLOPE * np.log10(d) - np.asarray(shadow_db, dtype=float)


def draw_channels(geom: DeviceGeometry, n_antennas: int, t: int, rng: RngSpec) -> ChannelState:
    """Draw round-``t`` channels: sqrt(gain) times i.i.d. circular unit fading.

    Each (round, device) pair uses its own stream, so rounds can be replayed
    out of order without disturbing each other.
    """
    if n_antennas < 1:
        raise ConfigError("need at least one antenna")
    amp = np.sqrt(geom.path_gain_linear())
    h = np.empty((geom.n_devices, n_antennas), dtype=complex)
    for k in range(geom.n_devices):
        gen = rng.stream("fading", t, k)
        h[k] = amp[k] * standard_complex(gen, n_antennas)
    return ChannelState(h=h, round_index=t)


def noise_variance(n0_dbm_hz: float, bandwidth_hz: float, nf_db: float) -> float:
    """Thermal noise power in watts over the given bandwidth and noise figure."""
    if bandwidth_hz <= 0:
        raise ConfigError("bandwidth must be positive")
    dbm = n0_dbm_hz + 10.0 * np.log10(bandwidth_hz) + nf_db
    return dbm_to_watts(dbm)
