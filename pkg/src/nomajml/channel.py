"""Rayleigh-fading SIMO channel model for superposed uplink transmissions.

Conventions:
    * Device k's channel vector has i.i.d. entries CN(0, sigma_k^2); the
      effective vector is h_k = sqrt(P_k) * c_k.
    * Receiver noise is circular complex Gaussian with total complex
      variance N0 per antenna (N0/2 per real dimension). This is the
      convention under which the simulated pairwise decision error rate
      equals Q(||delta|| / sqrt(2 N0)) exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .constellation import _is_power_of_two


@dataclass(frozen=True)
class DeviceConfig:
    """Per-device parameters (all linear scale)."""

    power: float
    channel_variance: float
    modulation_order: int

    def __post_init__(self):
        if not self.power > 0:
            raise ValueError(f"device power must be positive, got {self.power!r}")
        if not self.channel_variance > 0:
            raise ValueError(
                f"channel variance must be positive, got {self.channel_variance!r}"
            )
        if not _is_power_of_two(self.modulation_order) or self.modulation_order < 2:
            raise ValueError(
                f"modulation order must be a power of two >= 2, got {self.modulation_order!r}"
            )


@dataclass(frozen=True)
class ScenarioConfig:
    """A multi-device uplink scenario.

    Devices must be ordered by non-increasing average received power
    ``P_k * sigma_k^2`` (descending average SNR, symbol energies being
    equal); the analysis and SIC average-ordering paths rely on it.
    """

    devices: tuple[DeviceConfig, ...]
    antennas: int
    noise_density: float = 1.0

    def __post_init__(self):
        if len(self.devices) < 1:
            raise ValueError("at least one device required")
        if self.antennas < 1:
            raise ValueError(f"antenna count must be >= 1, got {self.antennas!r}")
        if not self.noise_density >= 0:
            raise ValueError(f"noise density must be >= 0, got {self.noise_density!r}")
        object.__setattr__(self, "devices", tuple(self.devices))
        avg = [d.power * d.channel_variance for d in self.devices]
        for i in range(len(avg) - 1):
            if avg[i] < avg[i + 1] - 1e-12 * max(abs(avg[i]), abs(avg[i + 1])):
                raise ValueError(
                    "devices must be ordered by descending average received "
                    f"power; device {i + 1} has {avg[i]:.6g} < device {i + 2}'s {avg[i + 1]:.6g}"
                )

    @property
    def num_devices(self) -> int:
        return len(self.devices)

    def with_noise(self, noise_density: float) -> "ScenarioConfig":
        """Copy of this config with a different noise density."""
        return replace(self, noise_density=noise_density)

    def received_snrs(self, symbol_energies: Sequence[float] | None = None) -> np.ndarray:
        """Average received SNR per device: P_k * eps_k * sigma_k^2 / N0."""
        eps = np.ones(self.num_devices) if symbol_energies is None else np.asarray(symbol_energies, dtype=float)
        pw = np.array([d.power * d.channel_variance for d in self.devices])
        return pw * eps / self.noise_density


@dataclass(frozen=True)
class ChannelRealization:
    """Effective channel vectors h_k = sqrt(P_k) c_k for one fading draw.

    ``h`` has shape (K, L): one row per device.
    """

    h: np.ndarray

    def __post_init__(self):
        if self.h.ndim != 2:
            raise ValueError(f"channel matrix must be 2-D (K, L), got shape {self.h.shape}")


@dataclass(frozen=True)
class ReceivedSignal:
    """The length-L antenna-domain observation."""

    y: np.ndarray

    def __post_init__(self):
        if self.y.ndim != 1:
            raise ValueError(f"received signal must be 1-D, got shape {self.y.shape}")


def sample_channel(cfg: ScenarioConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw one Rayleigh fading realization for every device.

    Entries of c_k are i.i.d. CN(0, sigma_k^2); rows of the returned
    matrix are h_k = sqrt(P_k) c_k.
    """
    k, l = cfg.num_devices, cfg.antennas
    sigma = np.array([d.channel_variance for d in cfg.devices])
    power = np.array([d.power for d in cfg.devices])
    z = rng.standard_normal((k, l)) + 1j * rng.standard_normal((k, l))
    c = np.sqrt(sigma / 2.0)[:, None] * z
    return ChannelRealization(h=np.sqrt(power)[:, None] * c)


def superpose_and_noise(
    ch: ChannelRealization,
    symbols: Sequence[complex],
    noise_density: float,
    rng: np.random.Generator,
) -> ReceivedSignal:
    """Form y = sum_k h_k x_k + w for one channel use.

    ``symbols`` holds one transmitted symbol per device. Noise entries
    are i.i.d. CN(0, noise_density); with zero noise density the return
    is the exact superposition.
    """
    x = np.asarray(symbols, dtype=complex)
    if x.shape != (ch.h.shape[0],):
        raise ValueError(
            f"expected {ch.h.shape[0]} symbols (one per device), got shape {x.shape}"
        )
    y = ch.h.T @ x
    if noise_density > 0:
        l = ch.h.shape[1]
        w = np.sqrt(noise_density / 2.0) * (
            rng.standard_normal(l) + 1j * rng.standard_normal(l)
        )
        y = y + w
    return ReceivedSignal(y=y)
