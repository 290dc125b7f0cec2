import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinoloco.curriculum import CurriculumState
from kinoloco.env import dynamics as D
from kinoloco.env.base import FAULT, FELL, RUNNING, TIMEOUT
from kinoloco.env.gait import (
    GaitConfig,
    gait_clock,
    pd_torques,
    reference_joint_rates,
    reference_joint_targets,
    reference_offsets,
    stance_mask,
    swing_mask,
)
from kinoloco.env.humanoid import EnvConfig, HumanoidEnv, nominal_base_height
from kinoloco.env.observations import (
    ACTION_DIM,
    OBS_DIM,
    OBS_SLICES,
    PRIVILEGED_DIM,
    STACKED_OBS_DIM,
    STACKED_PRIVILEGED_DIM,
    FrameStack,
)
from kinoloco.env.pointmass import PointMassConfig, PointMassEnv
from kinoloco.env.randomization import (
    DomainRandomizationConfig,
    apply_push,
    draw_parameters,
    draw_push_interval,
)
from kinoloco.env.robot import (
    ANKLE_PITCH,
    ARM_JOINTS,
    HIP_PITCH,
    KNEE,
    LEFT_ARM,
    LEFT_LEG,
    RIGHT_ARM,
    RIGHT_LEG,
    SHOULDER_PITCH,
    RobotSpec,
    mirror_joints,
)
from kinoloco.errors import InvalidConfigError, InvalidInputError
from kinoloco.kinodyn import centroidal_momentum_arrays, total_angular_momentum

SPEC = RobotSpec.default()
MODEL = SPEC.arrays()
NJ = SPEC.num_joints
NDOF = 6 + NJ
NC = len(MODEL.contact_body)


def step(pos, quat, theta, vel, *, gravity=9.81, dt=1e-3, substeps=10, kp=0.0, kd=0.0, targets=None,
         locked=None, friction=1.0, anchors=None, touching=None):
    n = pos.shape[0]
    anchors = np.zeros((n, NC, 2)) if anchors is None else anchors
    touching = np.zeros((n, NC), dtype=np.bool_) if touching is None else touching
    torque = np.zeros((n, NJ))
    force = np.zeros((n, NC, 3))
    ok = np.ones(n, dtype=np.bool_)
    kp = np.broadcast_to(np.asarray(kp, dtype=float), (n, NJ)).copy()
    kd = np.broadcast_to(np.asarray(kd, dtype=float), (n, NJ)).copy()
    targets = theta.copy() if targets is None else targets
    locked = np.zeros(NDOF, dtype=np.bool_) if locked is None else locked
    D.step_batch(MODEL, np.ones(n), np.full(n, friction), kp, kd, SPEC.joint_array("torque_limit"), targets,
                 np.zeros((n, NJ)), locked, gravity, dt, substeps, 3e4, 600.0, 5e3, 50.0,
                 pos, quat, theta, vel, anchors, touching, torque, force, ok)
    return force, ok, torque


def floating_state(rng, z=50.0, vel_scale=0.0):
    pos = np.array([[0.0, 0.0, z]])
    quat = np.array([[1.0, 0.0, 0.0, 0.0]])
    theta = (SPEC.default_joint_positions + rng.uniform(-0.3, 0.3, NJ))[None].copy()
    vel = rng.normal(0.0, vel_scale, (1, NDOF)) if vel_scale else np.zeros((1, NDOF))
    return pos, quat, theta, vel


def momentum_and_com(pos, quat, theta, vel):
    com, vcom, omega, inertia, _, _ = D.link_states_batch(MODEL, np.ones(1), pos, quat, theta, vel)
    total, *_ = centroidal_momentum_arrays(MODEL.mass, inertia, com, vcom, omega)
    linear = (MODEL.mass[:, None] * vcom[0]).sum(axis=0)
    c = (MODEL.mass[:, None] * com[0]).sum(axis=0) / MODEL.mass.sum()
    return total[0], linear, c


def quiet_env(num_envs=2, seed=0, **changes) -> HumanoidEnv:
    config = dataclasses.replace(EnvConfig(num_envs=num_envs), **changes)
    return HumanoidEnv(config, SPEC, DomainRandomizationConfig.disabled(), seed=seed)


# -- observation layout ---------------------------------------------------------------------


class TestDimensions:
    def test_frame_sizes(self):
        assert OBS_DIM == 59
        assert PRIVILEGED_DIM == 89
        assert STACKED_OBS_DIM == 885
        assert STACKED_PRIVILEGED_DIM == 267
        assert ACTION_DIM == 16

    def test_env_shapes(self):
        env = quiet_env(3)
        obs, priv = env.reset()
        assert obs.shape == (3, 885) and priv.shape == (3, 267)
        result = env.step(np.zeros((3, 16)))
        assert result.obs.shape == (3, 885)
        assert result.privileged.shape == (3, 267)
        assert result.reward.shape == (3,)

    def test_slices_are_contiguous(self):
        stops = sorted((s.start, s.stop) for s in OBS_SLICES.values())
        assert stops[0][0] == 0 and stops[-1][1] == OBS_DIM
        assert all(a[1] == b[0] for a, b in zip(stops, stops[1:]))

    def test_frame_stack_order_and_reset(self):
        stack = FrameStack(2, 3, 2)
        for k in range(1, 5):
            stack.push(np.full((2, 2), float(k)))
        assert stack.flat()[0].tolist() == [4, 4, 3, 3, 2, 2]
        stack.reset(np.array([True, False]))
        assert np.all(stack.flat()[0] == 0)
        assert stack.flat()[1, 0] == 4

    def test_clock_in_newest_frame(self):
        env = quiet_env(1)
        env.reset()
        result = env.step(np.zeros((1, 16)))
        sin, cos = gait_clock(env.control_dt, env.curriculum.cycle_time)
        assert result.obs[0, OBS_SLICES["clock"]] == pytest.approx([sin, cos])


# -- gait reference -------------------------------------------------------------------------


class TestGait:
    def test_clock_values(self):
        assert gait_clock(0.0, 0.64) == pytest.approx((0.0, 1.0))
        assert gait_clock(0.16, 0.64) == pytest.approx((1.0, 0.0), abs=1e-12)
        with pytest.raises(InvalidInputError):
            gait_clock(0.1, 0.0)

    def test_swing_mask_examples(self):
        assert swing_mask(0.25).tolist() == [1.0, 0.0]
        assert swing_mask(0.75).tolist() == [0.0, 1.0]
        assert swing_mask(0.0).tolist() == [0.0, 0.0]
        assert swing_mask(0.05)[0] == pytest.approx(0.5)
        with pytest.raises(InvalidInputError):
            swing_mask(0.1, ramp_width=0.3)

    @given(st.floats(0.0, 1.0), st.floats(0.0, 0.25))
    def test_swing_mask_properties(self, phase, width):
        swing = swing_mask(phase, width)
        assert np.all((swing >= 0) & (swing <= 1))
        assert swing[0] * swing[1] == 0.0
        assert np.allclose(stance_mask(phase, width), 1.0 - swing)

    def test_zero_command_has_no_offsets(self):
        assert np.all(reference_offsets(np.linspace(0, 1, 9), [0.0, 0.0, 0.0], 1.0) == 0)

    def test_leg_profile_example(self):
        off = reference_offsets(0.25, [1.0, 0.0, 0.0], 2.0, GaitConfig(leg_amplitude=0.2))
        assert off[LEFT_LEG.start + HIP_PITCH] == pytest.approx(-0.1)
        assert off[LEFT_LEG.start + KNEE] == pytest.approx(0.2)
        assert off[LEFT_LEG.start + ANKLE_PITCH] == pytest.approx(-0.1)
        assert np.all(off[RIGHT_LEG] == 0)

    @given(st.floats(0.0, 1.0), st.floats(0.0, 3.5))
    def test_half_cycle_mirror(self, phase, v):
        a = reference_offsets(phase, [v, 0, 0], 3.5)
        b = reference_offsets(np.mod(phase + 0.5, 1.0), [v, 0, 0], 3.5)
        assert np.allclose(b, mirror_joints(a), atol=1e-12)

    @given(st.floats(0.0, 1.0), st.floats(0.1, 3.5))
    def test_shoulder_opposes_same_side_hip(self, phase, v):
        off = reference_offsets(phase, [v, 0, 0], 3.5)
        for leg, arm in ((LEFT_LEG, LEFT_ARM), (RIGHT_LEG, RIGHT_ARM)):
            assert off[leg.start + HIP_PITCH] * off[arm.start + SHOULDER_PITCH] <= 0.0

    def test_rates_match_finite_difference(self):
        phase = np.array([0.1, 0.3, 0.6, 0.9])
        cmd, cycle, h = [1.5, 0, 0], 0.64, 1e-6
        fd = (reference_offsets(phase + h / cycle, cmd, 3.5) - reference_offsets(phase - h / cycle, cmd, 3.5)) / (2 * h)
        assert np.allclose(reference_joint_rates(phase, cmd, cycle, 3.5), fd, atol=1e-6)

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0.25, 3.5))
    def test_arm_counterswing_reduces_yaw_momentum(self, v):
        phase = np.linspace(0.0, 1.0, 32, endpoint=False)
        cmd = np.array([v, 0.0, 0.0])
        n = len(phase)
        result = []
        for arms in (False, True):
            targets = reference_joint_targets(phase, cmd, 3.5, SPEC.default_joint_positions)
            rates = reference_joint_rates(phase, cmd, 0.64, 3.5)
            if not arms:
                targets[:, ARM_JOINTS] = SPEC.default_joint_positions[ARM_JOINTS]
                rates[:, ARM_JOINTS] = 0.0
            vel = np.zeros((n, NDOF))
            vel[:, 6:] = rates
            pos = np.tile([0.0, 0.0, 0.9], (n, 1))
            quat = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
            c, vc, w, inertia, _, _ = D.link_states_batch(MODEL, np.ones(n), pos, quat, targets, vel)
            total, *_ = centroidal_momentum_arrays(MODEL.mass, inertia, c, vc, w)
            result.append(np.abs(total[:, 2]))
        legs_only, with_arms = result
        active = legs_only > 1e-9
        assert active.any()
        assert np.all(with_arms[active] < legs_only[active])

    def test_pd_torques(self):
        kp, kd, lim = np.full(16, 10.0), np.full(16, 1.0), np.full(16, 5.0)
        tau = pd_torques(np.full(16, 0.3), np.zeros(16), np.full(16, 2.0), kp, kd, lim)
        assert tau == pytest.approx(np.full(16, 1.0))
        one = pd_torques(np.full(16, 0.1), np.zeros(16), np.zeros(16), np.full(16, 100.0), np.zeros(16),
                         np.full(16, 1e3))
        assert one == pytest.approx(np.full(16, 10.0), abs=1e-12)
        tau = pd_torques(np.full(16, 3.0), np.zeros(16), np.zeros(16), kp, kd, lim)
        assert tau == pytest.approx(np.full(16, 5.0))
        tau = pd_torques(np.full(16, -3.0), np.zeros(16), np.zeros(16), kp, kd, lim)
        assert tau == pytest.approx(np.full(16, -5.0))
        with pytest.raises(InvalidInputError):
            pd_torques(np.zeros(15), np.zeros(15), np.zeros(15), kp[:15], kd[:15], lim[:15])


# -- floating-base dynamics -----------------------------------------------------------------


def potential(theta):
    com, *_ = D.link_states_batch(MODEL, np.ones(1), np.zeros((1, 3)), np.array([[1.0, 0, 0, 0]]), theta,
                                  np.zeros((1, NDOF)))
    return 9.81 * float(MODEL.mass @ com[0, :, 2])


class TestDynamics:
    @pytest.mark.parametrize("joint", range(16))
    def test_pinned_single_joint_matches_pendulum(self, joint):
        rng = np.random.default_rng(100 + joint)
        pos, quat, theta, vel = floating_state(rng)
        com, _, _, inertia, rot, anchor = D.link_states_batch(MODEL, np.ones(1), pos, quat, theta, vel)
        body = joint + 1
        axis = rot[0, MODEL.parent[body]] @ MODEL.joint_axis[body]
        axis /= np.linalg.norm(axis)
        moment = MODEL.armature[joint]
        for k in range(len(MODEL.parent)):
            if k == body or body in MODEL.ancestors[k]:
                r = com[0, k] - anchor[0, body]
                moment += axis @ inertia[0, k] @ axis + MODEL.mass[k] * np.sum(np.cross(axis, r) ** 2)
        h = 1e-5
        up, down = theta.copy(), theta.copy()
        up[0, joint] += h
        down[0, joint] -= h
        expected = -(potential(up) - potential(down)) / (2 * h) / moment
        locked = np.ones(NDOF, dtype=np.bool_)
        locked[6 + joint] = False
        dt = 1e-4
        step(pos, quat, theta, vel, dt=dt, substeps=1, locked=locked)
        got = vel[0, 6 + joint] / dt
        assert abs(got - expected) <= 1e-6 * max(1.0, abs(expected))
        assert np.count_nonzero(vel) == 1

    def test_pinned_joint_known_torque(self):
        pos, quat, theta, vel = floating_state(np.random.default_rng(5))
        joint = 3
        com, _, _, inertia, rot, anchor = D.link_states_batch(MODEL, np.ones(1), pos, quat, theta, vel)
        body = joint + 1
        axis = rot[0, MODEL.parent[body]] @ MODEL.joint_axis[body]
        axis /= np.linalg.norm(axis)
        moment = MODEL.armature[joint]
        for k in range(len(MODEL.parent)):
            if k == body or body in MODEL.ancestors[k]:
                r = com[0, k] - anchor[0, body]
                moment += axis @ inertia[0, k] @ axis + MODEL.mass[k] * np.sum(np.cross(axis, r) ** 2)
        locked = np.ones(NDOF, dtype=np.bool_)
        locked[6 + joint] = False
        targets = theta.copy()
        targets[0, joint] += 0.1
        kp = np.zeros(NJ)
        kp[joint] = 100.0
        dt = 1e-4
        _, _, torque = step(pos, quat, theta, vel, gravity=0.0, dt=dt, substeps=1, kp=kp, targets=targets,
                            locked=locked)
        assert torque[0, joint] == pytest.approx(10.0, abs=1e-12)
        assert abs(vel[0, 6 + joint] - 10.0 / moment * dt) <= 1e-6 * abs(10.0 / moment * dt)

    def test_free_flight_conserves_momentum(self):
        rng = np.random.default_rng(7)
        state = floating_state(rng, vel_scale=1.0)
        L0, p0, c0 = momentum_and_com(*state)
        errors = []
        for dt, substeps in ((1e-3, 1000), (1e-4, 10000)):
            s = tuple(a.copy() for a in state)
            step(*s, gravity=0.0, dt=dt, substeps=substeps)
            L1, p1, c1 = momentum_and_com(*s)
            drift = np.abs(L1 - L0).max() / np.abs(L0).max()
            assert drift < 0.01
            assert np.abs(p1 - p0).max() / np.abs(p0).max() < 0.01
            assert np.abs(c1 - (c0 + p0 / MODEL.mass.sum())).max() < 0.01
            errors.append(drift)
        # First-order integrator: ten times smaller step, roughly ten times smaller drift.
        assert errors[1] < errors[0] / 5

    def test_energy_drift_below_one_percent(self):
        rng = np.random.default_rng(0)
        pos, quat, theta, vel = floating_state(rng, vel_scale=0.5)
        e0 = D.mechanical_energy(MODEL, 1.0, 0.0, pos[0], quat[0], theta[0], vel[0])
        for _ in range(100):
            step(pos, quat, theta, vel, gravity=0.0)
        e1 = D.mechanical_energy(MODEL, 1.0, 0.0, pos[0], quat[0], theta[0], vel[0])
        assert abs(e1 - e0) / abs(e0) < 0.01

    def test_mass_matrix_symmetric_positive_definite(self, rng):
        pos, quat, theta, vel = floating_state(rng, vel_scale=1.0)
        mass, _ = D.mass_matrix_and_bias(MODEL, 1.0, 9.81, pos[0], quat[0], theta[0], vel[0])
        assert np.abs(mass - mass.T).max() < 1e-10
        assert np.linalg.eigvalsh(mass).min() > 0
        assert mass[0, 0] == pytest.approx(SPEC.total_mass)

    def test_kinetic_energy_matches_link_sum(self, rng):
        pos, quat, theta, vel = floating_state(rng, vel_scale=1.0)
        mass, _ = D.mass_matrix_and_bias(MODEL, 1.0, 9.81, pos[0], quat[0], theta[0], vel[0])
        com, vcom, omega, inertia, _, _ = D.link_states_batch(MODEL, np.ones(1), pos, quat, theta, vel)
        links = 0.5 * (MODEL.mass @ np.sum(vcom[0] ** 2, axis=1)) + 0.5 * np.einsum(
            "ni,nij,nj->", omega[0], inertia[0], omega[0]
        )
        rotor = 0.5 * MODEL.armature @ vel[0, 6:] ** 2
        assert 0.5 * vel[0] @ mass @ vel[0] == pytest.approx(links + rotor, rel=1e-10)

    def test_quaternion_stays_normalized(self, rng):
        pos, quat, theta, vel = floating_state(rng, vel_scale=3.0)
        for _ in range(50):
            step(pos, quat, theta, vel, gravity=0.0)
        assert np.linalg.norm(quat[0]) == pytest.approx(1.0, abs=1e-12)

    def test_free_fall(self):
        pos, quat, theta, vel = floating_state(np.random.default_rng(1))
        theta[:] = SPEC.default_joint_positions
        step(pos, quat, theta, vel, substeps=100)
        assert vel[0, 2] == pytest.approx(-9.81 * 0.1, rel=1e-9)
        assert np.abs(vel[0, :2]).max() < 1e-12

    def test_contact_pushes_up_only_when_penetrating(self):
        h = nominal_base_height(SPEC)
        pos = np.array([[0.0, 0.0, h - 0.01], [0.0, 0.0, h + 0.05]])
        quat = np.tile([1.0, 0, 0, 0], (2, 1))
        theta = np.tile(SPEC.default_joint_positions, (2, 1))
        vel = np.zeros((2, NDOF))
        force, ok, _ = step(pos, quat, theta, vel, substeps=1)
        assert ok.all()
        assert np.all(force[0, :, 2] > 0)
        assert np.all(force[1] == 0)
        assert vel[0, 2] > 0

    def test_friction_opposes_slip_and_is_capped(self):
        h = nominal_base_height(SPEC)
        pos = np.array([[0.0, 0.0, h - 0.005]])
        quat = np.array([[1.0, 0, 0, 0]])
        theta = SPEC.default_joint_positions[None].copy()
        vel = np.zeros((1, NDOF))
        vel[0, 0] = 2.0
        mu = 0.3
        force, _, _ = step(pos, quat, theta, vel, substeps=1, friction=mu)
        fn = force[0, :, 2]
        ft = np.linalg.norm(force[0, :, :2], axis=1)
        assert np.all(force[0, :, 0] < 0)
        assert np.all(ft <= mu * fn + 1e-9)

    def test_left_right_mirror_symmetry(self):
        rng = np.random.default_rng(3)
        h = nominal_base_height(SPEC)
        t0 = SPEC.default_joint_positions + rng.uniform(-0.05, 0.05, NJ)
        v = rng.normal(0.0, 0.2, NDOF)
        vm = v.copy()
        vm[[1, 3, 5]] *= -1
        vm[6:] = mirror_joints(v[6:])
        pos = np.array([[0.0, 0.0, h + 0.01], [0.0, 0.0, h + 0.01]])
        quat = np.tile([1.0, 0, 0, 0], (2, 1))
        theta = np.stack([t0, mirror_joints(t0)])
        vel = np.stack([v, vm])
        kp = np.tile(SPEC.joint_array("kp"), (2, 1))
        kd = np.tile(SPEC.joint_array("kd"), (2, 1))
        anchors, touching = np.zeros((2, NC, 2)), np.zeros((2, NC), dtype=np.bool_)
        targets = theta.copy()
        for _ in range(50):
            step(pos, quat, theta, vel, kp=kp, kd=kd, targets=targets, anchors=anchors, touching=touching)
        assert np.abs(theta[1] - mirror_joints(theta[0])).max() < 1e-9
        assert pos[1] == pytest.approx(pos[0] * [1, -1, 1], abs=1e-9)
        assert quat[1] == pytest.approx(quat[0] * [1, -1, 1, -1], abs=1e-9)

    def test_locked_dofs_do_not_move(self, rng):
        pos, quat, theta, vel = floating_state(rng, vel_scale=1.0)
        locked = np.zeros(NDOF, dtype=np.bool_)
        locked[6 + ARM_JOINTS] = True
        before = theta[0, ARM_JOINTS].copy()
        step(pos, quat, theta, vel, locked=locked)
        assert np.all(theta[0, ARM_JOINTS] == before)
        assert np.all(vel[0, 6 + ARM_JOINTS] == 0)


# -- domain randomization ---------------------------------------------------------------------


class TestRandomization:
    def test_invalid_range_rejected(self):
        with pytest.raises(InvalidConfigError):
            DomainRandomizationConfig(friction_range=(1.0, 0.5))

    def test_draws_within_ranges(self, rng):
        cfg = DomainRandomizationConfig()
        friction, mass, gains = draw_parameters(cfg, rng, 500)
        assert friction.min() >= 0.2 and friction.max() <= 1.3
        assert mass.min() >= 0.8 and mass.max() <= 1.2
        assert gains.min() >= 0.9 and gains.max() <= 1.1
        interval = draw_push_interval(cfg, rng, 100)
        assert interval.min() >= 4.0 and interval.max() <= 8.0

    def test_disabled_is_nominal(self, rng):
        cfg = DomainRandomizationConfig.disabled()
        friction, mass, gains = draw_parameters(cfg, rng, 4)
        assert np.all(friction == cfg.nominal_friction) and np.all(mass == 1) and np.all(gains == 1)
        assert np.all(np.isinf(draw_push_interval(cfg, rng, 4)))

    def test_ten_thousand_pushes_bounded(self, rng):
        cfg = DomainRandomizationConfig()
        vel = np.zeros((10_000, NDOF))
        lin, ang = apply_push(vel, np.ones(10_000, dtype=bool), cfg, rng)
        assert np.linalg.norm(lin, axis=1).max() <= cfg.push_velocity_max
        assert np.linalg.norm(ang, axis=1).max() <= cfg.push_angular_max

    @given(st.integers(0, 2**32 - 1))
    def test_push_bounds(self, seed):
        rng = np.random.default_rng(seed)
        cfg = DomainRandomizationConfig()
        vel = np.zeros((6, NDOF))
        mask = np.array([True, False, True, True, False, True])
        lin, ang = apply_push(vel, mask, cfg, rng)
        assert np.all(np.linalg.norm(lin, axis=1) <= cfg.push_velocity_max + 1e-12)
        assert np.all(np.linalg.norm(ang, axis=1) <= cfg.push_angular_max + 1e-12)
        assert np.all(vel[~mask] == 0)
        assert np.array_equal(vel[:, 0:2], lin) and np.array_equal(vel[:, 3:6], ang)
        assert np.all(vel[:, 2] == 0) and np.all(vel[:, 6:] == 0)


# -- humanoid environment ---------------------------------------------------------------------


class TestHumanoidEnv:
    def test_deterministic_given_seed(self):
        runs = []
        for _ in range(2):
            env = HumanoidEnv(EnvConfig(num_envs=3), SPEC, DomainRandomizationConfig(), seed=11)
            env.reset()
            rng = np.random.default_rng(0)
            out = []
            for _ in range(15):
                r = env.step(rng.normal(0, 0.5, (3, 16)))
                out.append((r.obs, r.reward, r.privileged))
            runs.append(out)
        for a, b in zip(*runs):
            for x, y in zip(a, b):
                assert np.array_equal(x, y)

    def test_reset_bounds(self):
        env = HumanoidEnv(EnvConfig(num_envs=1000), SPEC, DomainRandomizationConfig(), seed=1)
        env.reset()
        noise = env.config.init_joint_noise
        assert np.all(np.abs(env.theta - SPEC.default_joint_positions) <= noise)
        assert np.allclose(env.pos, [0, 0, nominal_base_height(SPEC)])
        assert np.all(env.vel == 0)
        cur = env.curriculum
        assert np.all((env.commands[:, 0] >= cur.v_min) & (env.commands[:, 0] <= cur.v_max))
        assert np.all(np.abs(env.commands[:, 1]) <= cur.lateral_range)
        assert np.all(np.abs(env.commands[:, 2]) <= cur.yaw_range)

    def test_stands_with_zero_action(self):
        env = quiet_env(4)
        env.reset()
        for _ in range(200):
            r = env.step(np.zeros((4, 16)))
            assert np.all(r.termination == RUNNING)
        assert np.all(env.pos[:, 2] > 0.8 * nominal_base_height(SPEC))

    def test_reward_scaled_by_control_dt(self):
        env = quiet_env(2)
        env.reset()
        r = env.step(np.zeros((2, 16)))
        assert r.reward == pytest.approx(r.info["reward_total_unscaled"] * env.control_dt)

    def test_nonfinite_action_faults_and_recovers(self):
        env = quiet_env(2)
        env.reset()
        actions = np.zeros((2, 16))
        actions[1, 3] = np.nan
        r = env.step(actions)
        assert r.termination.tolist() == [RUNNING, FAULT]
        assert r.done.tolist() == [False, True]
        assert np.all(np.isfinite(r.obs)) and np.all(np.isfinite(r.reward))
        assert r.reward[1] == 0.0

    def test_action_validation(self):
        env = quiet_env(2)
        with pytest.raises(InvalidInputError):
            env.step(np.zeros((2, 16)))
        env.reset()
        with pytest.raises(InvalidInputError):
            env.step(np.zeros((2, 15)))

    def test_timeout(self):
        env = quiet_env(1, episode_length_s=0.1)
        env.reset()
        kinds = [int(env.step(np.zeros((1, 16))).termination[0]) for _ in range(10)]
        assert kinds == [RUNNING] * 9 + [TIMEOUT]
        assert env.episode_step[0] == 0

    def test_tilt_terminates(self):
        env = quiet_env(1)
        env.reset()
        env.quat[0] = [np.cos(0.7), np.sin(0.7), 0.0, 0.0]
        assert env.step(np.zeros((1, 16))).termination[0] == FELL

    def test_fixed_command(self):
        env = quiet_env(2, command_resample_s=0.05)
        env.set_command([1.25, 0.0, 0.0])
        env.reset()
        for _ in range(10):
            env.step(np.zeros((2, 16)))
        assert np.all(env.commands == [1.25, 0.0, 0.0])

    def test_arms_locked(self):
        env = quiet_env(1, arms_locked=True)
        env.reset()
        for _ in range(10):
            env.step(np.ones((1, 16)))
        assert np.all(env.theta[0, ARM_JOINTS] == SPEC.default_joint_positions[ARM_JOINTS])

    def test_info_momentum_matches_snapshot(self):
        env = quiet_env(2)
        env.reset()
        r = env.step(np.random.default_rng(0).normal(0, 1, (2, 16)))
        report = total_angular_momentum(env.snapshot(1))
        assert report.total == pytest.approx(r.info["momentum"][1], abs=1e-12)

    def test_curriculum_cycle_time_drives_clock(self):
        env = quiet_env(1)
        env.set_curriculum(CurriculumState(cycle_time=0.5))
        env.reset()
        for _ in range(5):
            env.step(np.zeros((1, 16)))
        assert env.phase[0] == pytest.approx(0.1)


class TestPointMass:
    def test_dimensions_and_tracking(self):
        env = PointMassEnv(PointMassConfig(num_envs=4), seed=0)
        obs, priv = env.reset()
        assert obs.shape == (4, env.obs_dim) and priv.shape == (4, env.privileged_dim)
        env.set_command(np.zeros((4, 3)))
        env.reset()
        r = env.step(np.zeros((4, 1)))
        assert np.allclose(r.info["tracking_reward"], 1.0)

    def test_deterministic(self):
        outs = []
        for _ in range(2):
            env = PointMassEnv(PointMassConfig(num_envs=4), seed=5)
            env.reset()
            outs.append([env.step(np.full((4, 1), 0.3)).reward for _ in range(30)])
        assert np.array_equal(np.array(outs[0]), np.array(outs[1]))
