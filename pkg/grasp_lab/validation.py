"""
Validation of demonstration buffers.

Checks a collected buffer for internal consistency before it seeds a replay buffer:
record counts, configuration hash, finite and normalized values, rewards recomputed from
the stored observation pairs, episode boundaries and the manifest success rate.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .config import RewardConfig
from .demo_gen import DemoBufferFile
from .episode import StepInfo, TerminationCause
from .hand_sim import split_observation
from .logging_config import log_with_fallback
from .reward import RewardHistory, compute, planar_distance_cm

logger = logging.getLogger(__name__)

REWARD_TOLERANCE = 1e-3


@dataclass
class ValidationCheck:
    """
    Result of a single validation check.

    Attributes
    ----------
    name : str
        Name of the check (e.g., 'transition_count', 'reward_recomputation')
    status : str
        Status: 'PASS', 'FAIL', or 'WARN'
    details : str
        Human-readable description of the result
    expected : Optional[object]
        Expected value (if applicable)
    actual : Optional[object]
        Actual value (if applicable)
    """

    name: str
    status: str
    details: str
    expected: object | None = None
    actual: object | None = None


@dataclass
class ArtifactValidation:
    """
    Validation results for a single artifact.

    Attributes
    ----------
    artifact : str
        Artifact label (e.g., a buffer path)
    status : str
        Overall status: 'PASS' if all checks pass, 'FAIL' if any fail, 'WARN' if warnings exist
    checks : List[ValidationCheck]
        List of individual validation checks performed
    """

    artifact: str
    status: str
    checks: list[ValidationCheck]


@dataclass
class ValidationReport:
    """
    Complete validation report.

    Attributes
    ----------
    subject : str
        What was validated (e.g., 'demo buffer')
    status : str
        Overall status: 'PASS', 'FAIL', or 'WARN'
    artifacts : List[ArtifactValidation]
        Validation results for each artifact
    """

    subject: str
    status: str
    artifacts: list[ArtifactValidation]

    def to_dict(self) -> dict:
        """Convert report to dictionary format."""
        return {
            "subject": self.subject,
            "status": self.status,
            "artifacts": {
                av.artifact: {
                    "status": av.status,
                    "checks": {
                        check.name: {
                            "status": check.status,
                            "details": check.details,
                            "expected": check.expected,
                            "actual": check.actual,
                        }
                        for check in av.checks
                    },
                }
                for av in self.artifacts
            },
        }

    def __str__(self) -> str:
        """Generate human-readable report summary."""
        lines = [f"Validation Report for {self.subject}", f"Overall Status: {self.status}", "=" * 60]

        for av in self.artifacts:
            lines.append(f"\nArtifact: {av.artifact} [{av.status}]")
            for check in av.checks:
                symbol = "✓" if check.status == "PASS" else ("⚠" if check.status == "WARN" else "✗")
                lines.append(f"  {symbol} {check.name}: {check.details}")
                if check.expected is not None:
                    lines.append(f"    Expected: {check.expected}, Actual: {check.actual}")

        return "\n".join(lines)


def _overall(statuses: list[str]) -> str:
    if "FAIL" in statuses:
        return "FAIL"
    if "WARN" in statuses:
        return "WARN"
    return "PASS"


def _episode_slices(episodes: np.ndarray) -> list[slice]:
    if episodes.size == 0:
        return []
    starts = np.flatnonzero(np.r_[True, episodes[1:] != episodes[:-1]])
    ends = np.r_[starts[1:], episodes.size]
    return [slice(int(s), int(e)) for s, e in zip(starts, ends)]


def recompute_rewards(
    buffer: DemoBufferFile,
    orientation_repr: str = "rpy",
    reward_config: RewardConfig | None = None,
) -> np.ndarray:
    """
    Recompute every stored reward from its observation pair.

    Contact counts and distances are read from the observations, heights from
    ``next_h_mm`` (objects start each episode resting, at 0 mm), and the outcome from
    the stored termination code.

    Returns
    -------
    np.ndarray
        One reward per record, float64.
    """
    records = buffer.records
    out = np.zeros(records.shape[0])
    for sl in _episode_slices(records["episode"]):
        first = split_observation(records["obs"][sl.start], orientation_repr)
        prev = StepInfo(
            episode_id=0,
            step_index=0,
            f_count=int(round(first.tactile.sum())),
            d_cm=planar_distance_cm(first.eef_pose, first.object_ref_point),
            h_mm=0.0,
        )
        history = RewardHistory.from_info(prev)
        for offset, row in enumerate(records[sl]):
            nxt_obs = split_observation(row["next_obs"], orientation_repr)
            nxt = StepInfo(
                episode_id=0,
                step_index=offset + 1,
                f_count=int(round(nxt_obs.tactile.sum())),
                d_cm=planar_distance_cm(nxt_obs.eef_pose, nxt_obs.object_ref_point),
                h_mm=float(row["next_h_mm"]),
            )
            breakdown, history = compute(prev, nxt, TerminationCause(int(row["termination"])), history, reward_config)
            out[sl.start + offset] = breakdown.total
            prev = nxt
    return out


def validate_demo_buffer(
    buffer: DemoBufferFile,
    manifest: dict | None = None,
    *,
    expected_hash: str | None = None,
    orientation_repr: str = "rpy",
    reward_config: RewardConfig | None = None,
    success_only: bool = False,
    artifact: str = "demo_buffer",
) -> ValidationReport:
    """
    Validate a demonstration buffer and, optionally, its manifest.

    Parameters
    ----------
    buffer : DemoBufferFile
        Buffer to check
    manifest : Optional[dict]
        Sidecar manifest written by ``save_demo_buffer``
    expected_hash : Optional[str]
        Configuration hash the buffer should have been collected under
    orientation_repr : str
        Observation orientation encoding used during collection
    reward_config : Optional[RewardConfig]
        Reward switches used during collection
    success_only : bool
        Whether failed episodes were filtered out (skips the success-rate identity)

    Returns
    -------
    ValidationReport
        Complete validation report
    """
    checks: list[ValidationCheck] = []

    def _append_check(check: ValidationCheck) -> None:
        checks.append(check)
        if check.status == "FAIL":
            log_with_fallback(
                logger, logging.ERROR, f"Validation check failed for {artifact}/{check.name}: {check.details}"
            )
        elif check.status == "WARN":
            log_with_fallback(
                logger, logging.WARNING, f"Validation check warning for {artifact}/{check.name}: {check.details}"
            )

    records = buffer.records
    count = buffer.transition_count

    if manifest is not None:
        stated = manifest.get("transition_count")
        _append_check(
            ValidationCheck(
                name="transition_count",
                status="PASS" if stated == count else "FAIL",
                details="Manifest transition count matches records" if stated == count else "Transition count mismatch",
                expected=stated,
                actual=count,
            )
        )

    if expected_hash is None:
        _append_check(ValidationCheck(name="config_hash", status="WARN", details="No expected config hash supplied"))
    else:
        ok = buffer.env_config_hash == expected_hash
        _append_check(
            ValidationCheck(
                name="config_hash",
                status="PASS" if ok else "FAIL",
                details="Config hash matches" if ok else "Buffer was collected under another config",
                expected=expected_hash,
                actual=buffer.env_config_hash,
            )
        )

    finite = bool(
        np.all(np.isfinite(records["obs"]))
        and np.all(np.isfinite(records["next_obs"]))
        and np.all(np.isfinite(records["action"]))
        and np.all(np.isfinite(records["reward"]))
    )
    _append_check(
        ValidationCheck(
            name="finite_values",
            status="PASS" if finite else "FAIL",
            details="All stored values are finite" if finite else "Non-finite values found",
        )
    )

    max_action = float(np.abs(records["action"]).max()) if count else 0.0
    normalized = max_action <= 1.0 + 1e-6
    _append_check(
        ValidationCheck(
            name="normalized_actions",
            status="PASS" if normalized else "FAIL",
            details=f"Largest |action| component is {max_action:.6f}",
            expected="<= 1",
            actual=max_action,
        )
    )

    slices = _episode_slices(records["episode"])
    terminal_codes = [int(records["termination"][sl.stop - 1]) for sl in slices]
    boundaries_ok = all(code != int(TerminationCause.RUNNING) for code in terminal_codes)
    _append_check(
        ValidationCheck(
            name="episode_boundaries",
            status="PASS" if boundaries_ok else "FAIL",
            details=f"{len(slices)} complete episodes" if boundaries_ok else "An episode ends while still running",
        )
    )

    if finite and count:
        error = float(np.max(np.abs(recompute_rewards(buffer, orientation_repr, reward_config) - records["reward"])))
        _append_check(
            ValidationCheck(
                name="reward_recomputation",
                status="PASS" if error <= REWARD_TOLERANCE else "FAIL",
                details=f"Max reward discrepancy {error:.2e}",
                expected=f"<= {REWARD_TOLERANCE}",
                actual=error,
            )
        )

    if manifest is not None and not success_only:
        successes = sum(code == int(TerminationCause.SUCCESS) for code in terminal_codes)
        recomputed = successes / len(slices) if slices else 0.0
        stated_rate = float(manifest.get("success_rate", -1.0))
        ok = abs(recomputed - stated_rate) <= 1e-12
        _append_check(
            ValidationCheck(
                name="success_rate",
                status="PASS" if ok else "FAIL",
                details="Manifest success rate matches episode outcomes" if ok else "Success rate mismatch",
                expected=stated_rate,
                actual=recomputed,
            )
        )

    status = _overall([c.status for c in checks])
    log_with_fallback(
        logger,
        logging.INFO,
        f"Completed validation of {artifact} ({count} transitions) with overall status {status}.",
        fallback_print=False,
    )
    return ValidationReport(
        subject="demo buffer",
        status=status,
        artifacts=[ArtifactValidation(artifact=artifact, status=status, checks=checks)],
    )
