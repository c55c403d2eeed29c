"""
Satellite/UE geometry: slant range from elevation angle and altitude, and the
one-way propagation delay that follows from it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT_KM_S = 299_792.458


@dataclass(frozen=True)
class SatelliteGeometry:
    altitude_km: float
    earth_radius_km: float = 6371.0

    def __post_init__(self):
        if not self.altitude_km > 0:
            raise ValueError(f"altitude_km must be positive, got {self.altitude_km}")
        if not self.earth_radius_km > 0:
            raise ValueError(
                f"earth_radius_km must be positive, got {self.earth_radius_km}"
            )


@dataclass(frozen=True)
class UeGeometry:
    ue_id: int
    elevation_deg: float
    slant_range_km: float
    delay_ms: float


def slant_range(alpha_deg: float, geom: SatelliteGeometry) -> float:
    """
    Distance [km] between a ground UE seen at elevation `alpha_deg` and the
    satellite at altitude `geom.altitude_km`.
    """
    if not 0 < alpha_deg <= 90:
        raise ValueError(f"Elevation angle must lie in (0, 90] deg, got {alpha_deg}")

    sin_alpha = np.sin(np.deg2rad(alpha_deg))
    re, h = geom.earth_radius_km, geom.altitude_km
    return float(
        np.sqrt(re**2 * sin_alpha**2 + h**2 + 2 * h * re) - re * sin_alpha
    )


def propagation_delay(d_km: float) -> float:
    """One-way delay [ms] over `d_km` kilometres."""
    if not d_km > 0:
        raise ValueError(f"Distance must be positive, got {d_km}")
    return d_km / SPEED_OF_LIGHT_KM_S * 1000.0


def ue_geometry(ue_id: int, alpha_deg: float, geom: SatelliteGeometry) -> UeGeometry:
    d = slant_range(alpha_deg, geom)
    return UeGeometry(
        ue_id=ue_id,
        elevation_deg=float(alpha_deg),
        slant_range_km=d,
        delay_ms=propagation_delay(d),
    )


def delay_extremes(ues: Sequence[UeGeometry]) -> tuple[float, float]:
    """Return (tau_min, tau_max) in ms over `ues`."""
    if len(ues) == 0:
        raise ValueError("Cannot take delay extremes of an empty UE list")
    delays = [ue.delay_ms for ue in ues]
    return min(delays), max(delays)
