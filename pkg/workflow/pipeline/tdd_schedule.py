"""
Slot timelines at the satellite reference point.

Two policies are built here:

- ``TA``: every DL block is followed by a guard of ceil(2*tau_max / slot)
  idle slots and the UL slot(s); the next DL follows the UL immediately.
- ``ESSA``: further DL blocks are packed into the guard, starting
  ceil(T_th / slot) slots after the previous DL block, where
  T_th = 2*(tau_max - tau_min) + t_UL.

`verify_no_interference` checks a timeline in continuous time, at the
satellite and at every UE.
"""
from __future__ import annotations

import hashlib
import math
import re
from collections.abc import Collection, Mapping
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from workflow import logger
from workflow.pipeline.geometry import UeGeometry

# slack for float comparisons in ms and in fractional slots
TOL = 1e-9

_PATTERN_RE = re.compile(r"^(\d*)dsu$")


class Policy(str, Enum):
    TA = "ta"
    ESSA = "essa"


class SlotState(IntEnum):
    IDLE = 0
    DL = 1
    UL = 2


_TRACE_CHARS = {SlotState.IDLE: ".", SlotState.DL: "D", SlotState.UL: "U"}


class EssaInfeasibleError(ValueError):
    pass


class SlotGrid(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    slot_duration_ms: float = Field(0.125, gt=0)
    horizon_slots: int = Field(4096, ge=1)
    ul_slots: int = Field(1, ge=1)

    @property
    def ul_duration_ms(self) -> float:
        return self.ul_slots * self.slot_duration_ms


@dataclass(frozen=True)
class SlotPattern:
    dl_slots: int = 1

    def __post_init__(self):
        if self.dl_slots < 1:
            raise ValueError(
                f"A slot pattern needs at least one DL slot, got {self.dl_slots}"
            )

    @classmethod
    def parse(cls, name: str) -> "SlotPattern":
        """'dsu' -> X=1, '4dsu' -> X=4 (case-insensitive)."""
        match = _PATTERN_RE.match(name.strip().lower())
        if match is None:
            raise ValueError(f"Unrecognized slot pattern '{name}', expected '<X>dsu'")
        return cls(dl_slots=int(match.group(1) or 1))

    @property
    def name(self) -> str:
        return "dsu" if self.dl_slots == 1 else f"{self.dl_slots}dsu"


@dataclass(frozen=True)
class TransmissionRecord:
    tx_index: int
    dl_start_slot: int
    dl_len_slots: int
    ul_slot: int
    guard_slots: int

    @property
    def dl_end_slot(self) -> int:
        return self.dl_start_slot + self.dl_len_slots


@dataclass(eq=False)
class SlotTimeline:
    grid: SlotGrid
    states: np.ndarray
    owners: np.ndarray
    records: tuple[TransmissionRecord, ...]
    tau_min_ms: float
    tau_max_ms: float
    policy: Policy
    # metrics window is [warmup_until, complete_until)
    warmup_until: int = 0
    complete_until: int = 0
    truncated: bool = False

    @classmethod
    def from_records(
        cls,
        grid: SlotGrid,
        records: Sequence[TransmissionRecord],
        tau_min_ms: float,
        tau_max_ms: float,
        policy: Policy,
        complete_until: Optional[int] = None,
    ) -> "SlotTimeline":
        if tau_min_ms > tau_max_ms:
            raise ValueError(f"tau_min {tau_min_ms} exceeds tau_max {tau_max_ms}")

        states = np.zeros(grid.horizon_slots, dtype=np.int8)
        owners = np.full(grid.horizon_slots, -1, dtype=np.int32)

        def _mark(start, stop, state, tx_index):
            if start < 0 or stop > grid.horizon_slots:
                raise ValueError(
                    f"Transmission {tx_index} spans [{start}, {stop}) "
                    "outside the horizon"
                )
            if np.any(states[start:stop] != SlotState.IDLE):
                raise ValueError(
                    f"Transmission {tx_index} overlaps an allocated slot "
                    f"in [{start}, {stop})"
                )
            states[start:stop] = state
            owners[start:stop] = tx_index

        for rec in records:
            _mark(rec.dl_start_slot, rec.dl_end_slot, SlotState.DL, rec.tx_index)
            _mark(rec.ul_slot, rec.ul_slot + grid.ul_slots, SlotState.UL, rec.tx_index)

        records = tuple(records)
        if complete_until is None:
            complete_until = max(
                (r.ul_slot + grid.ul_slots for r in records), default=0
            )
        warmup_until = records[0].ul_slot + grid.ul_slots if records else 0
        warmup_until = min(warmup_until, complete_until)

        return cls(
            grid=grid,
            states=states,
            owners=owners,
            records=records,
            tau_min_ms=tau_min_ms,
            tau_max_ms=tau_max_ms,
            policy=policy,
            warmup_until=warmup_until,
            complete_until=complete_until,
            truncated=warmup_until >= complete_until,
        )

    @property
    def window(self) -> np.ndarray:
        return self.states[self.warmup_until : self.complete_until]

    def trace(self) -> str:
        """One character per slot: 'D', 'U' or '.'"""
        lookup = np.array([_TRACE_CHARS[s] for s in SlotState])
        return "".join(lookup[self.states])

    def trace_digest(self) -> str:
        return hashlib.sha256(self.trace().encode("ascii")).hexdigest()


@dataclass(frozen=True)
class Violation:
    kind: str  # "satellite" or "ue"
    ue_id: Optional[int]
    dl_tx: int
    ul_tx: int
    overlap_ms: float


def guard_slots(tau_max_ms: float, grid: SlotGrid) -> int:
    return math.ceil(2 * tau_max_ms / grid.slot_duration_ms - TOL)


def timing_advance(tau_i_ms: float, tau_max_ms: float) -> float:
    if tau_i_ms > tau_max_ms:
        raise ValueError(f"tau_i {tau_i_ms} ms exceeds tau_max {tau_max_ms} ms")
    return 2 * (tau_max_ms - tau_i_ms)


def essa_threshold(tau_max_ms: float, tau_min_ms: float, t_ul_ms: float) -> float:
    if tau_min_ms > tau_max_ms:
        raise ValueError(f"tau_min {tau_min_ms} ms exceeds tau_max {tau_max_ms} ms")
    return 2 * (tau_max_ms - tau_min_ms) + t_ul_ms


def essa_feasible(tau_min_ms: float, t_ul_ms: float) -> bool:
    return 2 * tau_min_ms >= t_ul_ms


def build_ta_timeline(
    grid: SlotGrid, pattern: SlotPattern, tau_max_ms: float
) -> SlotTimeline:
    if not tau_max_ms > 0:
        raise ValueError(f"tau_max must be positive, got {tau_max_ms}")

    n_guard = guard_slots(tau_max_ms, grid)
    n_dl = pattern.dl_slots
    period = n_dl + n_guard + grid.ul_slots
    n_periods = grid.horizon_slots // period
    if n_periods == 0:
        logger.warning(
            f"Horizon of {grid.horizon_slots} slots is shorter than "
            f"one TA period ({period})"
        )

    records = [
        TransmissionRecord(
            tx_index=k,
            dl_start_slot=k * period,
            dl_len_slots=n_dl,
            ul_slot=k * period + n_dl + n_guard,
            guard_slots=n_guard,
        )
        for k in range(n_periods)
    ]
    return SlotTimeline.from_records(
        grid,
        records,
        tau_min_ms=tau_max_ms,
        tau_max_ms=tau_max_ms,
        policy=Policy.TA,
        complete_until=n_periods * period,
    )


@dataclass
class _PendingUplink:
    # candidate DL starts d with lo < d + X and d < hi would reach some UE
    # while it transmits this UL
    lo: float
    hi: float


@dataclass
class _EssaState:
    states: np.ndarray
    pending: list = field(default_factory=list)


def _next_dl_start(d: int, n_dl: int, book: _EssaState) -> int:
    while True:
        busy = np.flatnonzero(book.states[d : d + n_dl] != SlotState.IDLE)
        if busy.size:
            d += int(busy[-1]) + 1
            continue
        for ul in book.pending:
            if d + n_dl > ul.lo + TOL and d < ul.hi - TOL:
                d = math.ceil(ul.hi - TOL)
                break
        else:
            return d


def build_essa_timeline(
    grid: SlotGrid, pattern: SlotPattern, tau_min_ms: float, tau_max_ms: float
) -> SlotTimeline:
    t_ul = grid.ul_duration_ms
    if not essa_feasible(tau_min_ms, t_ul):
        raise EssaInfeasibleError(
            f"ESSA needs 2*tau_min >= t_UL (tau_min={tau_min_ms} ms, "
            f"t_UL={t_ul} ms); fall back to the TA policy"
        )

    slot = grid.slot_duration_ms
    n_dl = pattern.dl_slots
    n_guard = guard_slots(tau_max_ms, grid)
    dl_gap = math.ceil(essa_threshold(tau_max_ms, tau_min_ms, t_ul) / slot - TOL)
    horizon = grid.horizon_slots

    book = _EssaState(states=np.zeros(horizon, dtype=np.int8))
    records = []
    d = 0
    while True:
        d = _next_dl_start(d, n_dl, book)
        if d + n_dl + n_guard + grid.ul_slots > horizon:
            break
        ul_slot = d + n_dl + n_guard
        book.states[d : d + n_dl] = SlotState.DL
        book.states[ul_slot : ul_slot + grid.ul_slots] = SlotState.UL
        records.append(
            TransmissionRecord(
                tx_index=len(records),
                dl_start_slot=d,
                dl_len_slots=n_dl,
                ul_slot=ul_slot,
                guard_slots=n_guard,
            )
        )
        book.pending.append(
            _PendingUplink(
                lo=ul_slot - 2 * tau_max_ms / slot,
                hi=ul_slot - (2 * tau_min_ms - t_ul) / slot,
            )
        )
        d += n_dl + dl_gap
        book.pending = [ul for ul in book.pending if ul.hi - TOL > d]

    if not records:
        logger.warning(f"Horizon of {horizon} slots fits no ESSA transmission")

    return SlotTimeline.from_records(
        grid,
        records,
        tau_min_ms=tau_min_ms,
        tau_max_ms=tau_max_ms,
        policy=Policy.ESSA,
        complete_until=min(d, horizon) if records else 0,
    )


def build_timeline(
    policy: Policy,
    grid: SlotGrid,
    pattern: SlotPattern,
    tau_min_ms: float,
    tau_max_ms: float,
) -> SlotTimeline:
    if Policy(policy) is Policy.TA:
        timeline = build_ta_timeline(grid, pattern, tau_max_ms)
        return replace(timeline, tau_min_ms=tau_min_ms)
    return build_essa_timeline(grid, pattern, tau_min_ms, tau_max_ms)


def _overlaps(tx_start, tx_end, rx_start, rx_end):
    """
    For each interval in (tx_start, tx_end), find the overlapping interval of the
    sorted, disjoint set (rx_start, rx_end). Returns (index into tx, index into rx,
    overlap length) for every pair that overlaps by more than TOL.
    """
    if len(tx_start) == 0 or len(rx_start) == 0:
        return []
    # last rx interval that starts before each tx interval ends
    cand = np.searchsorted(rx_start, tx_end - TOL, side="left") - 1
    touching = (cand >= 0) & (rx_end[np.maximum(cand, 0)] > tx_start + TOL)
    hits = []
    for i in np.flatnonzero(touching):
        # walk back over every rx interval still overlapping tx interval i
        j = cand[i]
        while j >= 0 and rx_end[j] > tx_start[i] + TOL:
            overlap = min(tx_end[i], rx_end[j]) - max(tx_start[i], rx_start[j])
            if overlap > TOL:
                hits.append((int(i), int(j), float(overlap)))
            j -= 1
    return hits


def verify_no_interference(
    timeline: SlotTimeline,
    ues: Sequence[UeGeometry],
    assignment: Mapping,
) -> list[Violation]:
    """
    Check `timeline` in continuous time.

    `assignment` maps each tx_index to the UE id (or collection of UE ids)
    transmitting its UL. Two conditions are checked:

    - at the satellite, no DL transmission overlaps a UL reception
    - at each UE, no UL it transmits overlaps a DL it receives
    """
    slot = timeline.grid.slot_duration_ms
    t_ul = timeline.grid.ul_duration_ms
    by_id = {ue.ue_id: ue for ue in ues}

    tx_per_ue: dict[int, list[int]] = {ue_id: [] for ue_id in by_id}
    for k, rec in enumerate(timeline.records):
        if rec.tx_index not in assignment:
            raise ValueError(f"Transmission {rec.tx_index} is not assigned to any UE")
        owners = assignment[rec.tx_index]
        if not isinstance(owners, Collection):
            owners = (owners,)
        for ue_id in owners:
            if ue_id not in by_id:
                raise ValueError(
                    f"Transmission {rec.tx_index} assigned to unknown UE {ue_id}"
                )
            tx_per_ue[ue_id].append(k)

    recs = timeline.records
    dl_recs = sorted(recs, key=lambda r: r.dl_start_slot)
    dl_start = np.array([r.dl_start_slot * slot for r in dl_recs])
    dl_end = np.array([r.dl_end_slot * slot for r in dl_recs])
    ul_start = np.array([r.ul_slot * slot for r in recs])
    ul_end = ul_start + t_ul

    violations = [
        Violation("satellite", None, dl_recs[j].tx_index, recs[i].tx_index, overlap)
        for i, j, overlap in _overlaps(ul_start, ul_end, dl_start, dl_end)
    ]

    for ue_id, tx_rows in tx_per_ue.items():
        if not tx_rows:
            continue
        tau = by_id[ue_id].delay_ms
        rows = np.asarray(tx_rows)
        hits = _overlaps(
            ul_start[rows] - tau, ul_end[rows] - tau, dl_start + tau, dl_end + tau
        )
        violations.extend(
            Violation(
                "ue", ue_id, dl_recs[j].tx_index, recs[rows[i]].tx_index, overlap
            )
            for i, j, overlap in hits
        )

    return violations
