"""Per-step episode bookkeeping shared by the simulator and the reward."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass


class TerminationCause(enum.IntEnum):
    """How a step left the episode. Integer values are stored in demo buffers."""

    RUNNING = 0
    SUCCESS = 1
    OBJECT_DISPLACED = 2
    IK_INFEASIBLE = 3
    TIMEOUT = 4

    @property
    def is_terminal(self) -> bool:
        return self is not TerminationCause.RUNNING

    @property
    def is_failure(self) -> bool:
        return self in (TerminationCause.OBJECT_DISPLACED, TerminationCause.IK_INFEASIBLE, TerminationCause.TIMEOUT)

    @property
    def label(self) -> str:
        return {
            TerminationCause.RUNNING: "Running",
            TerminationCause.SUCCESS: "Success",
            TerminationCause.OBJECT_DISPLACED: "ObjectDisplaced",
            TerminationCause.IK_INFEASIBLE: "IkInfeasible",
            TerminationCause.TIMEOUT: "Timeout",
        }[self]


@dataclass(frozen=True)
class StepInfo:
    """Scalar summary of the simulator state after a step (or at reset).

    Attributes
    ----------
    episode_id : int
        Incremented on every reset of an environment instance.
    step_index : int
        Steps taken so far in the episode.
    f_count : int
        Fingertips touching the object.
    d_cm : float
        Planar (hand-frame x/y) distance from the palm to the reference point, cm.
    h_mm : float
        Lift of the object above its resting height, mm.
    ever_two_contacts : bool
        Whether two or more contacts occurred at any step of the episode so far.
    attached : bool
        Object rigidly follows the hand.
    displacement_m : float
        Planar distance of the object from its initial position, m.
    ik_failed : bool
        The commanded pose failed the workspace check this step.
    """

    episode_id: int
    step_index: int
    f_count: int
    d_cm: float
    h_mm: float
    ever_two_contacts: bool = False
    attached: bool = False
    displacement_m: float = 0.0
    ik_failed: bool = False

    def to_dict(self) -> dict:
        return asdict(self)
