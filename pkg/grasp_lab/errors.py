"""Named error types raised across grasp-lab.

Value-shaped problems (bad configs, mismatched files, impossible geometry) also derive
from ``ValueError``; state problems (stepping a finished episode, divergence) derive
from ``RuntimeError``.
"""

from __future__ import annotations


class GraspLabError(Exception):
    """Base class for all package errors."""


class ConfigError(GraspLabError, ValueError):
    """Configuration document is malformed or inconsistent."""


class PreGraspInfeasible(GraspLabError, ValueError):
    """The pre-grasp pose of a plan fails the workspace check."""


class NoReachableCandidate(GraspLabError, ValueError):
    """No grasp candidate passes the reachability check."""


class EpisodeFinished(GraspLabError, RuntimeError):
    """``step`` was called after the episode terminated."""


class HistoryEpisodeMismatch(GraspLabError, ValueError):
    """A reward history is applied to a step from another episode."""


class SchemaMismatch(GraspLabError, ValueError):
    """A persisted artifact has an unknown or corrupted header."""


class ConfigHashMismatch(GraspLabError, ValueError):
    """A persisted artifact was produced under a different environment config."""


class ShapeMismatch(GraspLabError, ValueError):
    """Network input does not match the declared layer sizes."""


class BufferTooSmall(GraspLabError, RuntimeError):
    """A replay buffer holds fewer transitions than the requested batch."""


class MissingDemoFile(GraspLabError, ValueError):
    """A demo-dependent algorithm was started without a demonstration buffer."""


class TrainingDiverged(GraspLabError, RuntimeError):
    """A training loss became non-finite."""
