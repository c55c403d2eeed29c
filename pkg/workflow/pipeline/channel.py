"""
Link budget for the satellite-to-UE channel: free-space path loss, elevation
dependent atmospheric/scintillation losses, log-normal shadowing, SNR and
Ergodic (Shannon) capacity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from workflow.pipeline.geometry import UeGeometry

BOLTZMANN_J_K = 1.380649e-23


class LinkBudgetParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    tx_power_dbw: float = -6.0
    total_antenna_gain_dbi: float = 24.0  # G_tx + G_rx
    carrier_freq_ghz: float = Field(28.0, gt=0)
    bandwidth_mhz: float = Field(200.0, gt=0)
    noise_temperature_k: float = Field(290.0, gt=0)
    noise_figure_db: float = 5.0
    calibration_gain_db: float = 0.0

    @property
    def noise_floor_dbw(self) -> float:
        """10log10(kTB) with B in Hz"""
        return 10 * np.log10(
            BOLTZMANN_J_K * self.noise_temperature_k * self.bandwidth_mhz * 1e6
        )


class ChannelProfile(BaseModel):
    """
    Elevation-bucketed loss tables. Lookups use the nearest bucket; ties go
    to the lower elevation.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    elevation_deg: tuple[float, ...]
    atmospheric_loss_db: tuple[float, ...]
    scintillation_loss_db: tuple[float, ...]
    shadowing_sigma_db: tuple[float, ...]

    @model_validator(mode="after")
    def _check_tables(self):
        n = len(self.elevation_deg)
        if n == 0:
            raise ValueError("elevation_deg must not be empty")
        for name in (
            "atmospheric_loss_db",
            "scintillation_loss_db",
            "shadowing_sigma_db",
        ):
            values = np.asarray(getattr(self, name), dtype=float)
            if values.size != n:
                raise ValueError(f"{name} has {values.size} entries, expected {n}")
            if not np.all(np.isfinite(values)) or np.any(values < 0):
                raise ValueError(f"{name} must be finite and non-negative")
        if np.any(np.diff(self.elevation_deg) <= 0):
            raise ValueError("elevation_deg must be strictly increasing")
        return self

    def lookup(self, alpha_deg: float) -> tuple[float, float, float]:
        """(A_g, A_s, sigma_SF) for elevation `alpha_deg`."""
        idx = int(np.argmin(np.abs(np.asarray(self.elevation_deg) - alpha_deg)))
        return (
            self.atmospheric_loss_db[idx],
            self.scintillation_loss_db[idx],
            self.shadowing_sigma_db[idx],
        )


_ELEVATION_BUCKETS = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0)

# Ka-band urban LOS, 10 deg buckets
BUILTIN_PROFILES = {
    "urban": ChannelProfile(
        elevation_deg=_ELEVATION_BUCKETS,
        atmospheric_loss_db=(2.30, 1.17, 0.80, 0.62, 0.52, 0.46, 0.43, 0.41, 0.40),
        scintillation_loss_db=(1.08, 0.48, 0.30, 0.22, 0.17, 0.13, 0.12, 0.12, 0.12),
        shadowing_sigma_db=(4.0,) * len(_ELEVATION_BUCKETS),
    ),
    "zero": ChannelProfile(
        elevation_deg=_ELEVATION_BUCKETS,
        atmospheric_loss_db=(0.0,) * len(_ELEVATION_BUCKETS),
        scintillation_loss_db=(0.0,) * len(_ELEVATION_BUCKETS),
        shadowing_sigma_db=(0.0,) * len(_ELEVATION_BUCKETS),
    ),
}


@dataclass(frozen=True)
class LinkQuality:
    path_loss_db: float
    shadowing_db: float
    rx_power_dbw: float
    snr_db: float
    capacity_mbps: float


@dataclass(frozen=True)
class UeLink:
    """Geometry and link quality of one UE in one Monte Carlo drop."""

    geometry: UeGeometry
    quality: LinkQuality

    @property
    def ue_id(self) -> int:
        return self.geometry.ue_id

    @property
    def delay_ms(self) -> float:
        return self.geometry.delay_ms

    @property
    def snr_db(self) -> float:
        return self.quality.snr_db

    @property
    def capacity_mbps(self) -> float:
        return self.quality.capacity_mbps


def fspl(f_ghz: float, d_km: float) -> float:
    if not (f_ghz > 0 and d_km > 0):
        raise ValueError(
            f"Frequency and distance must be positive, got f={f_ghz}, d={d_km}"
        )
    return 92.45 + 20 * np.log10(f_ghz) + 20 * np.log10(d_km)


def sample_shadowing(sigma_db: float, rng: np.random.Generator) -> float:
    if sigma_db < 0:
        raise ValueError(f"Shadowing std must be non-negative, got {sigma_db}")
    return float(rng.normal(0.0, sigma_db))


def path_loss(fspl_db: float, ag_db: float, as_db: float, sf_db: float) -> float:
    return fspl_db + ag_db + as_db + sf_db


def ergodic_capacity(snr_db, bandwidth_mhz: float):
    """Shannon rate in Mbps; accepts scalars or arrays of SNR [dB]."""
    return bandwidth_mhz * np.log2(1 + 10 ** (np.asarray(snr_db) / 10))


def link_quality(
    ue: UeGeometry,
    params: LinkBudgetParams,
    profile: ChannelProfile,
    rng: np.random.Generator,
) -> LinkQuality:
    ag, as_, sigma = profile.lookup(ue.elevation_deg)
    sf = sample_shadowing(sigma, rng)
    pl = path_loss(fspl(params.carrier_freq_ghz, ue.slant_range_km), ag, as_, sf)
    prx = (
        params.tx_power_dbw
        + params.total_antenna_gain_dbi
        + params.calibration_gain_db
        - pl
    )
    snr = prx - params.noise_floor_dbw - params.noise_figure_db
    return LinkQuality(
        path_loss_db=float(pl),
        shadowing_db=sf,
        rx_power_dbw=float(prx),
        snr_db=float(snr),
        capacity_mbps=float(ergodic_capacity(snr, params.bandwidth_mhz)),
    )
