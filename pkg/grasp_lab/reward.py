"""Shaped grasping reward: finger contacts, approach, lift and episode outcome.

Units are fixed at the simulator boundary: distances enter in centimeters, heights in
millimeters. Contacts of the new state are folded into the history before any gate is
evaluated, so quantifiers over "timesteps 0..t+1" include ``t+1``.
"""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .config import RewardConfig
from .episode import StepInfo, TerminationCause
from .errors import HistoryEpisodeMismatch
from .geometry import Pose

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["step", "r_fingers", "r_dist", "r_height", "r_end", "total"]


@dataclass(frozen=True)
class RewardBreakdown:
    r_fingers: float
    r_dist: float
    r_height: float
    r_end: float

    @property
    def total(self) -> float:
        return self.r_fingers + self.r_dist + self.r_height + self.r_end

    def to_dict(self) -> dict[str, float]:
        return {
            "r_fingers": self.r_fingers,
            "r_dist": self.r_dist,
            "r_height": self.r_height,
            "r_end": self.r_end,
            "total": self.total,
        }


@dataclass(frozen=True)
class RewardHistory:
    """History an episode's reward gates depend on.

    Attributes
    ----------
    episode_id : int
        Episode the history belongs to.
    ever_two_contacts : bool
        Latched once two or more fingertips touched the object.
    prev_f, prev_d_cm, prev_h_mm :
        Values of the previous step.
    """

    episode_id: int = -1
    ever_two_contacts: bool = False
    prev_f: int = 0
    prev_d_cm: float = 0.0
    prev_h_mm: float = 0.0

    @classmethod
    def start(cls, episode_id: int, f0: int, d0_cm: float = 0.0, h0_mm: float = 0.0) -> RewardHistory:
        """History at reset, seeded with the initial contact count."""
        return cls(episode_id, f0 >= 2, int(f0), float(d0_cm), float(h0_mm))

    @classmethod
    def from_info(cls, info: StepInfo) -> RewardHistory:
        return cls.start(info.episode_id, info.f_count, info.d_cm, info.h_mm)


def planar_distance_cm(eef_pose: Pose, ref_point) -> float:
    """Distance (cm) from the palm to ``ref_point`` in the hand frame's x/y plane."""
    local = eef_pose.inverse_transform_point(np.asarray(ref_point, dtype=float))
    return float(np.hypot(local[0], local[1]) * 100.0)


def r_fingers(f_prev: int, f_next: int) -> float:
    return float(f_next - f_prev)


def r_dist(d_prev_cm: float, d_next_cm: float, history: RewardHistory, *, sign: float = -1.0) -> float:
    """Approach term, zero once two contacts were ever made.

    ``history`` must already include the contacts of the new state.
    """
    if history.ever_two_contacts:
        return 0.0
    return sign * (d_next_cm - d_prev_cm)


def r_height(f_next: int, dh_mm: float, history: RewardHistory) -> float:
    """Lift term: rewards lifting while gripping, penalizes dropping after any grip."""
    if (f_next >= 2 and dh_mm > 0) or (history.ever_two_contacts and dh_mm < 0):
        return float(f_next) * dh_mm
    return 0.0


def r_end(termination: TerminationCause) -> float:
    if termination is TerminationCause.SUCCESS:
        return 1.0
    if termination is TerminationCause.RUNNING:
        return 0.0
    return -1.0


def compute(
    prev_info: StepInfo,
    next_info: StepInfo,
    termination: TerminationCause,
    history: RewardHistory,
    config: RewardConfig | None = None,
) -> tuple[RewardBreakdown, RewardHistory]:
    """Reward of one transition and the history to carry forward.

    Raises
    ------
    HistoryEpisodeMismatch
        If ``history`` or either info belongs to another episode.
    """
    cfg = config or RewardConfig()
    if not (history.episode_id == prev_info.episode_id == next_info.episode_id):
        raise HistoryEpisodeMismatch(
            f"history episode {history.episode_id} does not match step episodes "
            f"{prev_info.episode_id}->{next_info.episode_id}"
        )
    updated = dataclasses.replace(
        history,
        ever_two_contacts=history.ever_two_contacts or next_info.f_count >= 2,
        prev_f=next_info.f_count,
        prev_d_cm=next_info.d_cm,
        prev_h_mm=next_info.h_mm,
    )
    breakdown = RewardBreakdown(
        r_fingers=r_fingers(prev_info.f_count, next_info.f_count),
        r_dist=r_dist(prev_info.d_cm, next_info.d_cm, updated, sign=cfg.dist_sign),
        r_height=r_height(next_info.f_count, next_info.h_mm - prev_info.h_mm, updated),
        r_end=r_end(termination),
    )
    return breakdown, updated


def breakdown_rows_to_frame(breakdowns: Iterable[RewardBreakdown], start_step: int = 1) -> pd.DataFrame:
    """Per-step reward trace with columns ``step, r_fingers, r_dist, r_height, r_end, total``."""
    rows = [{"step": start_step + i, **b.to_dict()} for i, b in enumerate(breakdowns)]
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def reward_trace_frame(episodes: Iterable[Iterable[RewardBreakdown]]) -> pd.DataFrame:
    """Concatenated per-episode traces; ``step`` restarts at 1 with every episode."""
    frames = [breakdown_rows_to_frame(episode) for episode in episodes]
    frames = [frame for frame in frames if not frame.empty]
    if not frames:
        return breakdown_rows_to_frame([])
    return pd.concat(frames, ignore_index=True)
