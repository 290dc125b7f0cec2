"""Batched reduced-order humanoid environment.

Each call to :meth:`HumanoidEnv.step` applies one control action per
environment, runs ``decimation`` physics substeps of PD control, evaluates the
composed step reward, detects termination and auto-resets finished
environments. Observations returned after a reset belong to the new episode;
quantities describing the finished step live in the ``info`` dict.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from kinoloco.curriculum import CurriculumState, sample_command
from kinoloco.env import dynamics
from kinoloco.env.base import FAULT, FELL, RUNNING, TIMEOUT, StepResult
from kinoloco.env.gait import (
    GaitConfig,
    gait_clock,
    phase_of,
    reference_joint_targets,
    stance_mask,
    swing_mask,
)
from kinoloco.env.observations import (
    ACTION_DIM,
    OBS_DIM,
    OBS_FRAMES,
    OBS_SCALES,
    PRIVILEGED_DIM,
    PRIVILEGED_FRAMES,
    FrameStack,
    build_frame,
    build_privileged_frame,
)
from kinoloco.env.randomization import (
    DomainRandomizationConfig,
    apply_push,
    draw_parameters,
    draw_push_interval,
)
from kinoloco.env.robot import ARM_JOINTS, NUM_JOINTS, RobotSpec
from kinoloco.errors import InvalidConfigError, InvalidInputError
from kinoloco.kinodyn import BodySnapshot, LinkState, centroidal_momentum_arrays, group_sums
from kinoloco.rewards import RewardConstants, RewardContext, RewardWeights, compose, raw_terms

NUM_BASE_DOF = dynamics.NUM_BASE_DOF


@dataclass(frozen=True)
class PhysicsConfig:
    dt: float = 0.001
    decimation: int = 10
    gravity: float = 9.81
    contact_stiffness: float = 3.0e4
    contact_damping: float = 600.0
    tangent_stiffness: float = 5.0e3
    tangent_damping: float = 50.0
    friction_scale: float = 1.0
    mass_scale: float = 1.0

    def __post_init__(self):
        if self.dt <= 0 or self.decimation < 1:
            raise InvalidConfigError("dt must be positive and decimation >= 1", key="physics.dt")
        for name in ("contact_stiffness", "contact_damping", "tangent_stiffness", "tangent_damping",
                     "friction_scale", "mass_scale"):
            if getattr(self, name) < 0:
                raise InvalidConfigError("must be non-negative", key=f"physics.{name}")

    @property
    def control_dt(self) -> float:
        return self.dt * self.decimation


@dataclass(frozen=True)
class EnvConfig:
    num_envs: int = 64
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    gait: GaitConfig = field(default_factory=GaitConfig)
    action_scale: float = 0.25
    action_clip: float = 18.0
    init_joint_noise: float = 0.03
    episode_length_s: float = 24.0
    command_resample_s: float = 8.0
    target_foot_height: float = 0.08
    target_height_offset: float = -0.8
    fall_height_fraction: float = 0.4
    tilt_limit: float = 1.0
    arms_locked: bool = False
    scale_rewards_by_dt: bool = True

    def __post_init__(self):
        if self.num_envs < 1:
            raise InvalidConfigError("need at least one environment", key="num_envs")
        if self.action_clip <= 0 or self.action_scale <= 0:
            raise InvalidConfigError("action scale and clip must be positive", key="action_clip")
        if self.episode_length_s <= 0 or self.command_resample_s <= 0:
            raise InvalidConfigError("durations must be positive", key="episode_length_s")


@dataclass(frozen=True)
class SimState:
    position: np.ndarray
    quaternion: np.ndarray
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray
    joint_positions: np.ndarray
    joint_velocities: np.ndarray
    foot_contacts: np.ndarray
    time: float
    phase: float


def euler_from_matrix(rot: np.ndarray) -> np.ndarray:
    """Roll, pitch, yaw (z-y-x convention) of ``(..., 3, 3)`` rotation matrices."""
    roll = np.arctan2(rot[..., 2, 1], rot[..., 2, 2])
    pitch = np.arcsin(np.clip(-rot[..., 2, 0], -1.0, 1.0))
    yaw = np.arctan2(rot[..., 1, 0], rot[..., 0, 0])
    return np.stack([roll, pitch, yaw], axis=-1)


def nominal_base_height(spec: RobotSpec) -> float:
    """Base height at which the lowest contact point touches the ground in the default posture."""
    points = dynamics.contact_points_batch(
        spec.arrays(), np.zeros((1, 3)), np.array([[1.0, 0.0, 0.0, 0.0]]), spec.default_joint_positions[None]
    )
    return float(-points[0, :, 2].min())


class HumanoidEnv:
    action_dim = ACTION_DIM
    obs_dim = OBS_FRAMES * OBS_DIM
    privileged_dim = PRIVILEGED_FRAMES * PRIVILEGED_DIM

    def __init__(
        self,
        config: EnvConfig = EnvConfig(),
        spec: RobotSpec | None = None,
        dr: DomainRandomizationConfig = DomainRandomizationConfig(),
        weights: RewardWeights | None = None,
        constants: RewardConstants | None = None,
        curriculum: CurriculumState = CurriculumState(),
        seed: int = 0,
    ):
        self.config = config
        self.spec = spec or RobotSpec.default()
        self.model = self.spec.arrays()
        self.dr = dr
        self.weights = weights or RewardWeights()
        self.constants = constants or RewardConstants()
        self.curriculum = curriculum
        self.rng = np.random.default_rng(seed)
        self.num_envs = n = config.num_envs
        self.control_dt = config.physics.control_dt
        self.max_episode_steps = int(round(config.episode_length_s / self.control_dt))
        self.resample_steps = int(round(config.command_resample_s / self.control_dt))

        self.default_joints = self.spec.default_joint_positions
        self.kp_nominal = self.spec.joint_array("kp")
        self.kd_nominal = self.spec.joint_array("kd")
        self.torque_limit = self.spec.joint_array("torque_limit")
        self.nominal_height = nominal_base_height(self.spec)
        self.group_tags = self.spec.group_tags
        self.masses = self.model.mass.copy()
        feet = self.spec.foot_links
        if len(feet) != 2:
            raise InvalidConfigError(f"expected two foot links, got {len(feet)}", key="links")
        self.contact_foot = np.array([feet.index(b) for b in self.model.contact_body])
        self.locked = np.zeros(NUM_BASE_DOF + NUM_JOINTS, dtype=np.bool_)
        if config.arms_locked:
            self.locked[NUM_BASE_DOF + ARM_JOINTS] = True

        ncontact = len(self.model.contact_body)
        self.pos = np.zeros((n, 3))
        self.quat = np.zeros((n, 4))
        self.theta = np.zeros((n, NUM_JOINTS))
        self.vel = np.zeros((n, NUM_BASE_DOF + NUM_JOINTS))
        self.anchors = np.zeros((n, ncontact, 2))
        self.touching = np.zeros((n, ncontact), dtype=np.bool_)
        self.contact_force = np.zeros((n, ncontact, 3))
        self.torques = np.zeros((n, NUM_JOINTS))
        self.ok = np.ones(n, dtype=np.bool_)
        self.episode_step = np.zeros(n, dtype=np.int64)
        self.commands = np.zeros((n, 3))
        self.fixed_command: np.ndarray | None = None
        self.actions = np.zeros((n, NUM_JOINTS))
        self.last_actions = np.zeros((n, NUM_JOINTS))
        self.friction = np.ones(n)
        self.mass_scale = np.ones(n)
        self.gain_scale = np.ones(n)
        self.next_push = np.full(n, np.inf)
        self.push_linear = np.zeros((n, 2))
        self.push_angular = np.zeros((n, 3))
        self.obs_stack = FrameStack(n, OBS_FRAMES, OBS_DIM)
        self.privileged_stack = FrameStack(n, PRIVILEGED_FRAMES, PRIVILEGED_DIM)
        self._needs_reset = True

    # -- configuration ------------------------------------------------------------
    def set_curriculum(self, state: CurriculumState) -> None:
        self.curriculum = state

    def set_command(self, command) -> None:
        """Pin commands (v_x, v_y, yaw rate), shape ``(3,)`` or ``(n, 3)``; ``None`` restores sampling."""
        if command is None:
            self.fixed_command = None
            return
        command = np.broadcast_to(np.asarray(command, dtype=float), (self.num_envs, 3)).copy()
        self.fixed_command = command
        self.commands[:] = command

    @property
    def time(self) -> np.ndarray:
        return self.episode_step * self.control_dt

    @property
    def phase(self) -> np.ndarray:
        return phase_of(self.time, self.curriculum.cycle_time)

    # -- reset --------------------------------------------------------------------
    def reset(self) -> tuple[np.ndarray, np.ndarray]:
        self._reset_envs(np.ones(self.num_envs, dtype=bool))
        self._needs_reset = False
        return self._observe()

    def _sample_commands(self, mask: np.ndarray) -> None:
        k = int(mask.sum())
        if k == 0:
            return
        if self.fixed_command is not None:
            self.commands[mask] = self.fixed_command[mask]
        else:
            self.commands[mask] = sample_command(self.curriculum, self.rng, k)

    def _reset_envs(self, mask: np.ndarray) -> None:
        k = int(mask.sum())
        if k == 0:
            return
        noise = self.config.init_joint_noise
        joints = np.broadcast_to(self.default_joints, (k, NUM_JOINTS)).copy()
        if noise > 0:
            joints += self.rng.uniform(-noise, noise, (k, NUM_JOINTS))
        if self.config.arms_locked:
            joints[:, ARM_JOINTS] = self.default_joints[ARM_JOINTS]
        self.theta[mask] = joints
        self.pos[mask] = (0.0, 0.0, self.nominal_height)
        self.quat[mask] = (1.0, 0.0, 0.0, 0.0)
        self.vel[mask] = 0.0
        self.anchors[mask] = 0.0
        self.touching[mask] = False
        self.contact_force[mask] = 0.0
        self.torques[mask] = 0.0
        self.episode_step[mask] = 0
        self.actions[mask] = 0.0
        self.last_actions[mask] = 0.0
        friction, mass, gains = draw_parameters(self.dr, self.rng, k)
        self.friction[mask] = friction
        self.mass_scale[mask] = mass
        self.gain_scale[mask] = gains
        self.next_push[mask] = draw_push_interval(self.dr, self.rng, k)
        self.push_linear[mask] = 0.0
        self.push_angular[mask] = 0.0
        self._sample_commands(mask)
        self.obs_stack.reset(mask)
        self.privileged_stack.reset(mask)

    # -- stepping -----------------------------------------------------------------
    def step(self, actions: np.ndarray) -> StepResult:
        if self._needs_reset:
            raise InvalidInputError("call reset() before step()")
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.num_envs, ACTION_DIM):
            raise InvalidInputError(f"actions must have shape {(self.num_envs, ACTION_DIM)}, got {actions.shape}")
        finite = np.all(np.isfinite(actions), axis=1)
        actions = np.where(finite[:, None], actions, 0.0)
        actions = np.clip(actions, -self.config.action_clip, self.config.action_clip)
        self.last_actions = self.actions.copy()
        self.actions = actions
        targets = self.default_joints + self.config.action_scale * actions
        if self.config.arms_locked:
            targets[:, ARM_JOINTS] = self.default_joints[ARM_JOINTS]

        push_mask = self.time + 1e-9 >= self.next_push
        if push_mask.any():
            lin, ang = apply_push(self.vel, push_mask, self.dr, self.rng)
            self.push_linear[push_mask] = lin[push_mask]
            self.push_angular[push_mask] = ang[push_mask]
            self.next_push[push_mask] += draw_push_interval(self.dr, self.rng, int(push_mask.sum()))

        phys = self.config.physics
        dynamics.step_batch(
            self.model,
            self.mass_scale * phys.mass_scale,
            self.friction * phys.friction_scale,
            self.kp_nominal * self.gain_scale[:, None],
            self.kd_nominal * self.gain_scale[:, None],
            self.torque_limit,
            targets,
            np.zeros_like(targets),
            self.locked,
            phys.gravity,
            phys.dt,
            phys.decimation,
            phys.contact_stiffness,
            phys.contact_damping,
            phys.tangent_stiffness,
            phys.tangent_damping,
            self.pos,
            self.quat,
            self.theta,
            self.vel,
            self.anchors,
            self.touching,
            self.torques,
            self.contact_force,
            self.ok,
        )
        fault = ~(self.ok & finite)
        if fault.any():
            # Park faulted envs in a finite state so downstream arithmetic stays clean.
            self._reset_envs(fault)
        self.episode_step += 1

        kin = self._kinematics()
        breakdown = compose(raw_terms(self._reward_context(kin), self.constants), self.weights)
        reward = breakdown.total * (self.control_dt if self.config.scale_rewards_by_dt else 1.0)
        reward = np.where(fault, 0.0, reward)

        termination = np.full(self.num_envs, RUNNING)
        euler = kin["euler"]
        fell = (self.pos[:, 2] < self.config.fall_height_fraction * self.nominal_height) | np.any(
            np.abs(euler[:, :2]) > self.config.tilt_limit, axis=1
        )
        termination[self.episode_step >= self.max_episode_steps] = TIMEOUT
        termination[fell] = FELL
        termination[fault] = FAULT
        done = termination != RUNNING

        info = {
            "tracking_reward": breakdown.raw["r_trk"],
            "reward_raw": breakdown.raw,
            "reward_weighted": breakdown.weighted_terms,
            "reward_total_unscaled": breakdown.total,
            "momentum": kin["momentum"],
            "group_momentum": kin["group_momentum"],
            "base_velocity": kin["actual_velocity"],
            "base_height": self.pos[:, 2].copy(),
            "base_position": self.pos.copy(),
            "base_quaternion": self.quat.copy(),
            "base_twist_world": self.vel[:, 0:6].copy(),
            "actions": self.actions.copy(),
            "commands": self.commands.copy(),
            "joint_positions": self.theta.copy(),
            "joint_velocities": self.vel[:, NUM_BASE_DOF:].copy(),
            "torques": self.torques.copy(),
            "foot_contacts": kin["foot_contacts"],
            "episode_time": self.time,
        }

        resample = (~done) & (self.episode_step % self.resample_steps == 0)
        self._sample_commands(resample)
        self._reset_envs(done)
        obs, privileged = self._observe()
        return StepResult(obs, privileged, reward, done, termination, info)

    # -- derived quantities -------------------------------------------------------
    def _kinematics(self) -> dict:
        com, vcom, omega, inertia, rot, _ = dynamics.link_states_batch(
            self.model, self.mass_scale * self.config.physics.mass_scale, self.pos, self.quat, self.theta, self.vel
        )
        masses = np.broadcast_to(self.masses, (self.num_envs, len(self.masses))).copy()
        masses[:, 0] *= self.mass_scale * self.config.physics.mass_scale
        total, per_link, _, _ = centroidal_momentum_arrays(masses, inertia, com, vcom, omega)
        base_rot = rot[:, 0]
        lin_body = np.einsum("nji,nj->ni", base_rot, self.vel[:, 0:3])
        ang_body = np.einsum("nji,nj->ni", base_rot, self.vel[:, 3:6])
        points = dynamics.contact_points_batch(self.model, self.pos, self.quat, self.theta)
        foot_heights = np.stack(
            [points[:, self.contact_foot == f, 2].min(axis=1) for f in range(2)], axis=1
        )
        foot_contacts = np.stack(
            [self.touching[:, self.contact_foot == f].any(axis=1) for f in range(2)], axis=1
        ).astype(float)
        return {
            "momentum": total,
            "group_momentum": group_sums(per_link, self.group_tags),
            "euler": euler_from_matrix(base_rot),
            "projected_gravity": -base_rot[:, 2, :],
            "lin_body": lin_body,
            "ang_body": ang_body,
            "actual_velocity": np.stack([lin_body[:, 0], lin_body[:, 1], self.vel[:, 5]], axis=1),
            "foot_heights": foot_heights,
            "foot_contacts": foot_contacts,
            "link_states": (com, vcom, omega, inertia),
        }

    def reference_targets(self) -> np.ndarray:
        return reference_joint_targets(
            self.phase, self.commands, self.curriculum.v_max, self.default_joints, self.config.gait
        )

    def _reward_context(self, kin: dict) -> RewardContext:
        return RewardContext(
            momentum=kin["momentum"],
            base_height=self.pos[:, 2],
            nominal_base_height=self.nominal_height,
            target_height_offset=self.config.target_height_offset,
            foot_heights=kin["foot_heights"],
            target_foot_height=self.config.target_foot_height,
            swing_mask=swing_mask(self.phase, self.config.gait.ramp_width),
            joint_positions=self.theta,
            joint_targets=self.reference_targets(),
            joint_velocities=self.vel[:, NUM_BASE_DOF:],
            commanded_velocity=self.commands,
            actual_base_velocity=kin["actual_velocity"],
            curriculum_v_max=max(self.curriculum.v_max, 1e-6),
            phase=self.phase,
            projected_gravity=kin["projected_gravity"],
            actions=self.actions,
            last_actions=self.last_actions,
            torques=self.torques,
            torque_limits=self.torque_limit,
        )

    def _observe(self) -> tuple[np.ndarray, np.ndarray]:
        kin = self._kinematics()
        sin, cos = gait_clock(self.time, self.curriculum.cycle_time)
        parts = {
            "clock": np.stack([sin, cos], axis=1),
            "commands": self.commands * OBS_SCALES["commands"],
            "joint_pos": (self.theta - self.default_joints) * OBS_SCALES["joint_pos"],
            "joint_vel": self.vel[:, NUM_BASE_DOF:] * OBS_SCALES["joint_vel"],
            "base_ang_vel": kin["ang_body"] * OBS_SCALES["base_ang_vel"],
            "base_euler": kin["euler"] * OBS_SCALES["base_euler"],
            "last_actions": self.actions,
        }
        privileged = build_privileged_frame(
            {
                **parts,
                "friction": self.friction[:, None],
                "mass_scale": self.mass_scale[:, None],
                "base_lin_vel": kin["lin_body"] * OBS_SCALES["base_lin_vel"],
                "push_force": self.push_linear,
                "push_torque": self.push_angular,
                "tracking_diff": self.reference_targets() - self.theta,
                "stance_mask": stance_mask(self.phase, self.config.gait.ramp_width),
                "feet_contact": kin["foot_contacts"],
            }
        )
        if self.dr.noise_enabled:
            n = self.num_envs
            parts = dict(parts)
            parts["joint_pos"] = parts["joint_pos"] + self.rng.uniform(-1, 1, (n, NUM_JOINTS)) * self.dr.noise_joint_pos
            parts["joint_vel"] = parts["joint_vel"] + self.rng.uniform(-1, 1, (n, NUM_JOINTS)) * (
                self.dr.noise_joint_vel * OBS_SCALES["joint_vel"]
            )
            parts["base_ang_vel"] = parts["base_ang_vel"] + self.rng.uniform(-1, 1, (n, 3)) * self.dr.noise_ang_vel
            parts["base_euler"] = parts["base_euler"] + self.rng.uniform(-1, 1, (n, 3)) * self.dr.noise_euler
        self.obs_stack.push(build_frame(parts))
        self.privileged_stack.push(privileged)
        return self.obs_stack.flat(), self.privileged_stack.flat()

    # -- inspection ---------------------------------------------------------------
    def sim_state(self, index: int) -> SimState:
        contacts = np.array([self.touching[index, self.contact_foot == f].any() for f in range(2)])
        return SimState(
            position=self.pos[index].copy(),
            quaternion=self.quat[index].copy(),
            linear_velocity=self.vel[index, 0:3].copy(),
            angular_velocity=self.vel[index, 3:6].copy(),
            joint_positions=self.theta[index].copy(),
            joint_velocities=self.vel[index, NUM_BASE_DOF:].copy(),
            foot_contacts=contacts,
            time=float(self.time[index]),
            phase=float(self.phase[index]),
        )

    def snapshot(self, index: int) -> BodySnapshot:
        """World-frame link states of one environment for :mod:`kinoloco.kinodyn`."""
        com, vcom, omega, inertia = self._kinematics()["link_states"]
        scale = self.mass_scale[index] * self.config.physics.mass_scale
        links = [
            LinkState(
                mass=float(self.masses[i] * (scale if i == 0 else 1.0)),
                inertia=inertia[index, i],
                com_position=com[index, i],
                com_velocity=vcom[index, i],
                angular_velocity=omega[index, i],
                group_tag=self.group_tags[i],
            )
            for i in range(len(self.masses))
        ]
        return BodySnapshot(links=tuple(links), timestamp=float(self.time[index]))

    def with_config(self, **changes) -> "HumanoidEnv":
        return HumanoidEnv(
            dataclasses.replace(self.config, **changes), self.spec, self.dr, self.weights,
            self.constants, self.curriculum,
        )
