"""Analog transmission pipeline: complex packing, noisy multicast broadcast,
over-the-air uplink aggregation, and the ideal (error-free) variant.

Noise is sampled at the post-processing level: the broadcast estimate at a
device carries one complex noise element of variance ``sigma2_dl / |h^H w|^2``
per channel use, and the aggregated uplink carries ``sigma2_ul / (sum alpha)^2``
per element. Sampling there is statistically identical to simulating the raw
antenna-domain noise and much cheaper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelState, NoiseParams
from .errors import AggregationError, ConfigError, DegenerateChannelError, DomainError
from .rng import RngSpec, standard_complex

# Linear floor on |h^H w| guarding divisions by degenerate alignments.
EPS_CHANNEL = 1e-12


@dataclass(frozen=True)
class PowerBudget:
    """Average transmit power per channel use: one scalar for the base
    station, one per device (watts)."""

    p_dl: float
    p_ul: np.ndarray

    def __post_init__(self):
        if self.p_dl <= 0 or np.any(np.asarray(self.p_ul) <= 0):
            raise ConfigError("power budgets must be positive")


@dataclass
class BeamformingSolution:
    """Downlink beamformer, unit-norm uplink receive beamformer, and device
    power scalings. ``mode`` records whether devices phase-align their
    transmissions ("aligned") or send unweighted ("raw")."""

    w_dl: np.ndarray
    w_ul: np.ndarray
    p: np.ndarray
    mode: str = "aligned"

    def __post_init__(self):
        if self.mode not in ("aligned", "raw"):
            raise ConfigError(f"unknown aggregation mode: {self.mode!r}")


def assert_feasible(
    sol: BeamformingSolution,
    budget: PowerBudget,
    norm_theta_sq: float,
    norm_local_sq: np.ndarray,
    dim: int,
    tol: float = 1e-9,
) -> None:
    """Check the transmit power constraints and the unit receive norm."""
    if abs(float(np.linalg.norm(sol.w_ul)) - 1.0) > tol:
        raise ConfigError("uplink receive beamformer must have unit norm")
    dl_power = float(np.vdot(sol.w_dl, sol.w_dl).real) * norm_theta_sq
    dl_cap = dim * budget.p_dl
    if dl_power > dl_cap * (1.0 + tol) + tol:
        raise ConfigError(f"downlink power {dl_power} exceeds budget {dl_cap}")
    ul_power = np.asarray(sol.p) * np.asarray(norm_local_sq)
    ul_cap = dim * np.asarray(budget.p_ul)
    if np.any(sol.p < -tol) or np.any(ul_power > ul_cap * (1.0 + tol) + tol):
        raise ConfigError("a device power scaling violates its budget")


def pack_complex(theta: np.ndarray) -> np.ndarray:
    """First half of the vector becomes the real parts, second half the
    imaginary parts."""
    d = theta.shape[0]
    if d % 2 != 0:
        raise DomainError(f"model dimension must be even to pack, got {d}")
    half = d // 2
    return theta[:half] + 1j * theta[half:]


def unpack_complex(theta_c: np.ndarray) -> np.ndarray:
    return np.concatenate([theta_c.real, theta_c.imag])


def downlink_broadcast(
    theta: np.ndarray,
    w_dl: np.ndarray,
    ch: ChannelState,
    noise: NoiseParams,
    rng: RngSpec,
) -> np.ndarray:
    """Broadcast the model to every device and return the K post-scaled
    estimates, shape (K, D).

    Each device rescales its received signal by the conjugate channel over the
    squared magnitude, leaving the model plus zero-mean noise of complex
    element variance ``sigma2_dl / |h_k^H w_dl|^2``.
    """
    theta_c = pack_complex(theta)
    gains = np.abs(ch.h.conj() @ w_dl)  # |h_k^H w_dl|
    if np.any(gains < EPS_CHANNEL):
        k_bad = int(np.argmin(gains))
        raise DegenerateChannelError(
            f"|h^H w_dl| = {gains[k_bad]:.3e} below floor for device {k_bad}"
        )
    out = np.empty((ch.n_devices, theta.shape[0]))
    for k in range(ch.n_devices):
        gen = rng.stream("dl_noise", ch.round_index, k)
        n = standard_complex(gen, theta_c.shape[0])
        scale = np.sqrt(noise.sigma2_dl) / gains[k]
        out[k] = unpack_complex(theta_c + scale * n)
    return out


def effective_alpha(p_k: float, h_k: np.ndarray, w_ul: np.ndarray) -> float:
    """Real post-beamforming uplink gain of one device after phase alignment."""
    if p_k < 0:
        raise DomainError("power scaling must be nonnegative")
    return float(np.sqrt(p_k) * np.abs(np.vdot(h_k, w_ul)))


def _alphas(sol: BeamformingSolution, ch: ChannelState, mode: str) -> np.ndarray:
    inner = ch.h.conj() @ sol.w_ul  # h_k^H w_ul
    root_p = np.sqrt(np.asarray(sol.p, dtype=float))
    if mode == "aligned":
        return root_p * np.abs(inner)
    # Raw mode: no device-side phase rotation, the effective channel keeps
    # its phase (w_ul^H h_k = conj(h_k^H w_ul)).
    return root_p * np.conj(inner)


def uplink_aggregate(
    models: np.ndarray,
    sol: BeamformingSolution,
    ch: ChannelState,
    noise: NoiseParams,
    rng: RngSpec,
    mode: str | None = None,
) -> np.ndarray:
    """Superpose the device models over the air and rescale by the effective
    channel sum; returns the next global model.

    Aligned mode uses real nonnegative per-device gains that sum coherently;
    raw mode keeps the complex gains (no phase alignment), so the weights may
    be complex and their imaginary leakage folds into the unpacked result.
    """
    mode = sol.mode if mode is None else mode
    models = np.asarray(models, dtype=float)
    packed = np.stack([pack_complex(m) for m in models])
    alphas = _alphas(sol, ch, mode)
    total = alphas.sum()
    if abs(total) <= EPS_CHANNEL:
        raise AggregationError(
            f"near-singular aggregation: |sum alpha| = {abs(total):.3e}"
        )
    rho = alphas / total
    gen = rng.stream("ul_noise", ch.round_index)
    n = np.sqrt(noise.sigma2_ul) * standard_complex(gen, packed.shape[1])
    agg = rho @ packed + n / total
    return unpack_complex(agg)


def ideal_aggregate(models: np.ndarray) -> np.ndarray:
    """Noise-free uniform average of the device models."""
    models = np.asarray(models, dtype=float)
    if models.shape[0] < 1:
        raise ConfigError("need at least one model to aggregate")
    return models.mean(axis=0)
