import pathlib

import matplotlib
import pytest

from workflow.pipeline.channel import LinkQuality, UeLink, ergodic_capacity
from workflow.pipeline.geometry import UeGeometry
from workflow.pipeline.scenario import ScenarioConfig

matplotlib.use("Agg")

REPO_ROOT = pathlib.Path(__file__).resolve().parents[1]


@pytest.fixture
def config_dir():
    return REPO_ROOT / "config"


@pytest.fixture
def default_config():
    return ScenarioConfig()


def _make_link(ue_id, snr_db=0.0, delay_ms=2.0, capacity_mbps=None):
    d_km = delay_ms * 299_792.458 / 1000.0
    geometry = UeGeometry(
        ue_id=ue_id,
        elevation_deg=90.0,
        slant_range_km=d_km,
        delay_ms=delay_ms,
    )
    quality = LinkQuality(
        path_loss_db=0.0,
        shadowing_db=0.0,
        rx_power_dbw=0.0,
        snr_db=snr_db,
        capacity_mbps=(
            float(ergodic_capacity(snr_db, 200.0))
            if capacity_mbps is None
            else capacity_mbps
        ),
    )
    return UeLink(geometry, quality)


@pytest.fixture
def make_link():
    return _make_link
