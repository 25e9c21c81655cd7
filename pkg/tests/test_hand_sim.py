from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grasp_lab.config import ActionLimits, EnvConfig
from grasp_lab.episode import StepInfo, TerminationCause
from grasp_lab.errors import EpisodeFinished, PreGraspInfeasible
from grasp_lab.geometry import Pose
from grasp_lab.grasp_prior import GraspPlan
from grasp_lab.hand_sim import (
    ACTION_DIM,
    BASE_OBSERVATION_DIM,
    Action,
    ContactState,
    GraspEnv,
    WorkspaceChecker,
    carry_object,
    check_termination,
    contacts_from_points,
    resting_state,
    split_observation,
    update_object,
)


def _far_tips(n: int) -> np.ndarray:
    return np.tile([5.0, 5.0, 5.0], (n, 1))


def _lift(z: float) -> np.ndarray:
    action = np.zeros(ACTION_DIM)
    action[2] = z
    return action


class TestSpaces:
    def test_dimensions(self, env: GraspEnv) -> None:
        assert env.action_dim == ACTION_DIM
        assert env.observation_dim == BASE_OBSERVATION_DIM
        assert env.action_space.shape == (ACTION_DIM,)
        assert env.observation_space.shape == (BASE_OBSERVATION_DIM,)

    def test_action_space_bounds_follow_limits(self, env: GraspEnv) -> None:
        high = env.action_space.high
        np.testing.assert_allclose(high[:3], 0.01)
        np.testing.assert_allclose(high[3:6], 0.05)
        np.testing.assert_allclose(high[6:], 0.1)

    def test_quaternion_observation_adds_one_component(self) -> None:
        env = GraspEnv(EnvConfig(orientation_repr="quat"))
        assert env.observation_dim == BASE_OBSERVATION_DIM + 1

    def test_visual_features_extend_the_observation(self, tmp_path, planner, plan_finder) -> None:
        frames = np.arange(12, dtype=float).reshape(3, 4)
        np.save(tmp_path / "features.npy", frames)
        env = GraspEnv(EnvConfig(visual_features_path=str(tmp_path / "features.npy")))
        assert env.observation_dim == BASE_OBSERVATION_DIM + 4
        seed, plan = plan_finder(env, planner)
        obs = env.reset(plan, seed)
        np.testing.assert_array_equal(obs.visual_features, frames[0])
        for _ in range(5):
            obs = env.step(np.zeros(ACTION_DIM)).observation
        np.testing.assert_array_equal(obs.visual_features, frames[-1])


class TestActions:
    def test_normalized_roundtrip(self) -> None:
        limits = ActionLimits()
        values = np.linspace(-1.0, 1.0, ACTION_DIM)
        np.testing.assert_allclose(Action.from_normalized(values, limits).normalized(limits), values, atol=1e-15)

    def test_clipped_respects_limits(self) -> None:
        action = Action.from_array(np.full(ACTION_DIM, 5.0)).clipped(ActionLimits())
        assert np.all(action.eef_pos_offset == 0.01)
        assert np.all(action.eef_rpy_offset == 0.05)
        assert np.all(action.finger_offsets == 0.1)

    def test_wrong_length_rejected(self) -> None:
        with pytest.raises(ValueError):
            Action.from_array(np.zeros(ACTION_DIM - 1))


class TestObservation:
    @pytest.mark.parametrize("orientation", ["rpy", "quat"])
    def test_split_inverts_to_array(self, started_env, orientation: str) -> None:
        env, _, _ = started_env
        obs = env.observe()
        restored = split_observation(obs.to_array(orientation), orientation)
        assert restored.eef_pose.allclose(obs.eef_pose, atol=1e-12)
        np.testing.assert_array_equal(restored.qpos, obs.qpos)
        np.testing.assert_array_equal(restored.tactile, obs.tactile)
        np.testing.assert_array_equal(restored.object_ref_point, obs.object_ref_point)

    def test_reset_observation_uses_plan(self, started_env) -> None:
        env, _, plan = started_env
        obs = env.observe()
        assert obs.eef_pose.allclose(plan.pre_grasp_pose)
        np.testing.assert_array_equal(obs.qpos, env.hand_model.qpos_open)
        np.testing.assert_array_equal(obs.object_ref_point, plan.object_ref_point)


class TestStep:
    def test_zero_action_changes_nothing(self, started_env) -> None:
        env, _, _ = started_env
        before = env.observe().to_array()
        obj_before = env.object_state.pose
        result = env.step(np.zeros(ACTION_DIM))
        assert result.reward == 0.0
        assert result.termination is TerminationCause.RUNNING
        np.testing.assert_array_equal(result.observation.to_array(), before)
        assert env.object_state.pose.allclose(obj_before, atol=1e-15)
        assert result.info.step_index == 1

    def test_oversized_action_is_clipped(self, started_env) -> None:
        env, _, _ = started_env
        z0 = env.hand_state.eef_pose.position[2]
        env.step(_lift(1.0))
        assert env.hand_state.eef_pose.position[2] == pytest.approx(z0 + 0.01, abs=1e-12)

    def test_non_finite_action_rejected(self, started_env) -> None:
        env, _, _ = started_env
        action = np.zeros(ACTION_DIM)
        action[4] = np.nan
        with pytest.raises(ValueError):
            env.step(action)

    def test_leaving_the_workspace_ends_the_episode(self, started_env) -> None:
        env, _, _ = started_env
        result = None
        for _ in range(200):
            previous = env.hand_state.eef_pose
            result = env.step(_lift(0.01))
            if result.done:
                break
        assert result is not None and result.termination is TerminationCause.IK_INFEASIBLE
        assert result.reward_breakdown.r_end == -1.0
        assert env.hand_state.eef_pose.allclose(previous, atol=1e-15)
        with pytest.raises(EpisodeFinished):
            env.step(np.zeros(ACTION_DIM))

    def test_timeout(self, planner, plan_finder) -> None:
        env = GraspEnv(EnvConfig(t_max=5))
        seed, plan = plan_finder(env, planner)
        env.reset(plan, seed)
        causes = [env.step(np.zeros(ACTION_DIM)).termination for _ in range(5)]
        assert causes[:4] == [TerminationCause.RUNNING] * 4
        assert causes[4] is TerminationCause.TIMEOUT

    def test_step_before_reset_raises(self, env: GraspEnv) -> None:
        with pytest.raises(EpisodeFinished):
            env.step(np.zeros(ACTION_DIM))

    def test_unreachable_pre_grasp_raises(self, env: GraspEnv) -> None:
        far = Pose([1.0, 1.0, 1.0])
        plan = GraspPlan(far, far, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0])
        with pytest.raises(PreGraspInfeasible):
            env.reset(plan, 0)

    def test_tiny_workspace_rejects_every_plan(self, started_env) -> None:
        env, seed, plan = started_env
        tiny = dataclasses.replace(env.config.workspace, half_extents=(0.001, 0.001, 0.001))
        cramped = GraspEnv(dataclasses.replace(env.config, workspace=tiny))
        with pytest.raises(PreGraspInfeasible):
            cramped.reset(plan, seed)

    def test_episode_ids_increase_on_reset(self, started_env) -> None:
        env, seed, plan = started_env
        first = env.info.episode_id
        env.reset(plan, seed)
        assert env.info.episode_id == first + 1
        assert env.info.step_index == 0

    def test_identical_inputs_give_identical_rollouts(self, planner, plan_finder) -> None:
        actions = np.random.default_rng(7).uniform(-1.0, 1.0, (40, ACTION_DIM)) * 0.01

        def rollout() -> tuple[np.ndarray, list[float]]:
            env = GraspEnv(EnvConfig())
            seed, plan = plan_finder(env, planner, 3)
            env.reset(plan, seed)
            obs, rewards = [], []
            for action in actions:
                result = env.step(action)
                obs.append(result.observation.to_array())
                rewards.append(result.reward)
                if result.done:
                    break
            return np.array(obs), rewards

        obs_a, rewards_a = rollout()
        obs_b, rewards_b = rollout()
        assert obs_a.tobytes() == obs_b.tobytes()
        assert rewards_a == rewards_b


class TestContacts:
    def test_opposing_fingertips_touch(self, sugar_box) -> None:
        pose = Pose([0.0, 0.0, sugar_box.rest_height])
        tips = _far_tips(5)
        offset = sugar_box.half_extents[0] + 0.008
        tips[0] = pose.position + [-offset, 0.0, 0.0]
        tips[1] = pose.position + [offset, 0.0, 0.0]
        contacts = contacts_from_points(tips, 0.008, sugar_box, pose, 0.002)
        assert contacts.count == 2
        assert contacts.touching[:2] == (True, True)
        assert contacts.has_opposing_pair()
        np.testing.assert_array_equal(contacts.tactile, [1, 1, 0, 0, 0])

    def test_same_side_contacts_do_not_oppose(self, sugar_box) -> None:
        pose = Pose([0.0, 0.0, sugar_box.rest_height])
        tips = _far_tips(5)
        offset = sugar_box.half_extents[0] + 0.008
        tips[0] = pose.position + [offset, 0.01, 0.0]
        tips[1] = pose.position + [offset, -0.01, 0.0]
        contacts = contacts_from_points(tips, 0.008, sugar_box, pose, 0.002)
        assert contacts.count == 2
        assert not contacts.has_opposing_pair()

    def test_tolerance_boundary(self, sugar_box) -> None:
        pose = Pose([0.0, 0.0, sugar_box.rest_height])
        tips = _far_tips(5)
        tips[0] = pose.position + [sugar_box.half_extents[0] + 0.008 + 0.0019, 0.0, 0.0]
        tips[1] = pose.position + [-(sugar_box.half_extents[0] + 0.008 + 0.0021), 0.0, 0.0]
        contacts = contacts_from_points(tips, 0.008, sugar_box, pose, 0.002)
        assert contacts.touching[:2] == (True, False)

    @settings(max_examples=100, deadline=None)
    @given(
        points=st.lists(
            st.tuples(*[st.floats(min_value=-0.2, max_value=0.2, allow_nan=False)] * 3), min_size=5, max_size=5
        ),
        yaw=st.floats(min_value=-3.0, max_value=3.0, allow_nan=False),
    )
    def test_contacts_are_mirror_symmetric(self, sugar_box, points, yaw: float) -> None:
        pose = Pose.from_rpy([0.05, -0.02, sugar_box.rest_height], [0.0, 0.0, yaw])
        local = np.array(points)
        mirrored = local * [-1.0, 1.0, 1.0]
        a = contacts_from_points(pose.transform_point(local), 0.008, sugar_box, pose, 0.002)
        b = contacts_from_points(pose.transform_point(mirrored), 0.008, sugar_box, pose, 0.002)
        np.testing.assert_allclose(a.distances, b.distances, atol=1e-12)
        clear = np.abs(a.distances - 0.002) > 1e-9
        assert np.array_equal(np.array(a.touching)[clear], np.array(b.touching)[clear])


class TestObjectRules:
    def _gripping_contacts(self) -> ContactState:
        normals = np.zeros((5, 3))
        normals[0] = [-1.0, 0.0, 0.0]
        normals[1] = [1.0, 0.0, 0.0]
        return ContactState((True, True, False, False, False), np.zeros(5), normals)

    def test_attach_then_carry_keeps_grip(self, sugar_box) -> None:
        obj = resting_state(sugar_box, [0.02, -0.03], 0.4)
        hand = Pose.from_rpy([0.1, -0.03, sugar_box.rest_height], [0.0, -np.pi / 2, 0.0])
        attached = update_object(sugar_box, obj, self._gripping_contacts(), ContactState.empty(), hand)
        assert attached.attached
        assert hand.compose(attached.grip).allclose(obj.pose, atol=1e-12)

        moved_hand = hand.translated([0.0, 0.0, 0.01])
        carried = carry_object(sugar_box, attached, moved_hand)
        assert carried.height_above_table == pytest.approx(10.0, abs=1e-9)
        assert carried.grip.allclose(attached.grip, atol=1e-12)
        np.testing.assert_allclose(carried.pose.position - obj.pose.position, [0.0, 0.0, 0.01], atol=1e-12)

    def test_no_attach_without_opposing_pair(self, sugar_box) -> None:
        obj = resting_state(sugar_box, [0.0, 0.0], 0.0)
        normals = np.tile([1.0, 0.0, 0.0], (5, 1))
        contacts = ContactState((True, True, True, False, False), np.zeros(5), normals)
        assert not update_object(sugar_box, obj, contacts, ContactState.empty(), Pose.identity()).attached

    def test_slip_drops_object_to_the_table(self, sugar_box) -> None:
        obj = resting_state(sugar_box, [0.02, -0.03], 0.4)
        hand = Pose.from_rpy([0.1, -0.03, sugar_box.rest_height], [0.0, -np.pi / 2, 0.0])
        attached = update_object(sugar_box, obj, self._gripping_contacts(), ContactState.empty(), hand)
        lifted = carry_object(sugar_box, attached, hand.translated([0.0, 0.0, 0.05]))
        dropped = update_object(sugar_box, lifted, ContactState.empty(), self._gripping_contacts(), hand)
        assert not dropped.attached
        assert dropped.height_above_table == 0.0
        assert dropped.pose.position[2] == pytest.approx(sugar_box.rest_height)
        np.testing.assert_allclose(dropped.pose.position[:2], obj.pose.position[:2], atol=1e-12)

    def test_deepest_growing_penetration_sets_the_push(self, started_env, monkeypatch) -> None:
        env, _, _ = started_env
        normals = np.tile([1.0, 0.0, 0.0], (5, 1))
        normals[3] = [0.0, 1.0, 0.0]
        before = np.array([0.0, 0.0, 0.009, 0.0, 0.0])
        after = np.array([0.0, 0.002, 0.009, 0.005, 0.0])
        depths = iter([(before, normals), (after, normals)])
        monkeypatch.setattr(env, "_penetration", lambda tips, obj: next(depths))
        hand = env.hand_state
        # Tip 2 is deepest but did not move further in; tip 3 is the deepest pusher.
        np.testing.assert_allclose(env._push_shift(hand, hand.eef_pose, env.object_state), [0.0, -0.005])

    def test_no_push_without_growing_penetration(self, started_env, monkeypatch) -> None:
        env, _, _ = started_env
        depth = (np.full(5, 0.003), np.tile([1.0, 0.0, 0.0], (5, 1)))
        monkeypatch.setattr(env, "_penetration", lambda tips, obj: depth)
        hand = env.hand_state
        assert env._push_shift(hand, hand.eef_pose, env.object_state) is None


class TestTermination:
    def _info(self, **kwargs) -> StepInfo:
        base = dict(
            episode_id=0,
            step_index=1000,
            f_count=3,
            d_cm=0.0,
            h_mm=100.0,
            attached=True,
            displacement_m=0.5,
            ik_failed=True,
        )
        base.update(kwargs)
        return StepInfo(**base)

    def test_priority_order(self) -> None:
        assert check_termination(self._info()) is TerminationCause.SUCCESS
        assert check_termination(self._info(attached=False)) is TerminationCause.OBJECT_DISPLACED
        assert check_termination(self._info(attached=False, displacement_m=0.0)) is TerminationCause.IK_INFEASIBLE
        assert (
            check_termination(self._info(attached=False, displacement_m=0.0, ik_failed=False))
            is TerminationCause.TIMEOUT
        )
        assert (
            check_termination(self._info(attached=False, displacement_m=0.0, ik_failed=False, step_index=3))
            is TerminationCause.RUNNING
        )

    def test_lift_below_threshold_is_not_success(self) -> None:
        info = self._info(h_mm=99.0, displacement_m=0.0, ik_failed=False, step_index=3)
        assert check_termination(info) is TerminationCause.RUNNING


class TestWorkspace:
    def test_box_and_cone(self) -> None:
        check = WorkspaceChecker()
        down = Pose.from_rpy([0.0, 0.0, 0.2], [np.pi, 0.0, 0.0])
        assert check(down)
        assert check(down, reference_approach=[0.0, 0.0, -1.0])
        assert not check(down, reference_approach=[0.0, 0.0, 1.0])
        assert not check(Pose([0.0, 0.0, 0.5]))
