"""UE selection: max-min SNR (MG) and minimum differential delay (MS)."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from workflow.pipeline.channel import UeLink


class Method(str, Enum):
    MG = "mg"
    MS = "ms"


@dataclass(frozen=True)
class SelectionResult:
    selected_ids: tuple[int, ...]
    tau_min_ms: float
    tau_max_ms: float
    delay_spread_ms: float
    min_snr_db: float
    method: Method


def _check_size(links: Sequence[UeLink], n_s: int):
    if n_s < 1:
        raise ValueError(f"Number of selected UEs must be at least 1, got {n_s}")
    if n_s > len(links):
        raise ValueError(f"Cannot select {n_s} UEs out of {len(links)}")


def _result(links: Sequence[UeLink], rows: np.ndarray, method: Method):
    chosen = [links[i] for i in rows]
    delays = [link.delay_ms for link in chosen]
    return SelectionResult(
        selected_ids=tuple(sorted(link.ue_id for link in chosen)),
        tau_min_ms=min(delays),
        tau_max_ms=max(delays),
        delay_spread_ms=max(delays) - min(delays),
        min_snr_db=min(link.snr_db for link in chosen),
        method=method,
    )


def select_mg(links: Sequence[UeLink], n_s: int) -> SelectionResult:
    """The `n_s` UEs with the highest SNR; ties go to the smaller ue_id."""
    _check_size(links, n_s)
    ids = np.array([link.ue_id for link in links])
    snr = np.array([link.snr_db for link in links])
    order = np.lexsort((ids, -snr))
    return _result(links, order[:n_s], Method.MG)


def select_ms(links: Sequence[UeLink], n_s: int) -> SelectionResult:
    """
    The `n_s` UEs with the smallest delay spread.

    In delay-sorted order the optimum is always a contiguous window; the first
    window reaching the minimum spread wins, so ties go to the smallest
    starting delay and then to the smaller ue_id.
    """
    _check_size(links, n_s)
    ids = np.array([link.ue_id for link in links])
    tau = np.array([link.delay_ms for link in links])
    order = np.lexsort((ids, tau))
    sorted_tau = tau[order]
    spreads = sorted_tau[n_s - 1 :] - sorted_tau[: len(links) - n_s + 1]
    start = int(np.argmin(spreads))
    return _result(links, order[start : start + n_s], Method.MS)


def select(method: Method, links: Sequence[UeLink], n_s: int) -> SelectionResult:
    if Method(method) is Method.MG:
        return select_mg(links, n_s)
    return select_ms(links, n_s)
