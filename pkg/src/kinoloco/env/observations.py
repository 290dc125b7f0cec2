"""Single-frame observation layouts and newest-first frame stacks."""

from __future__ import annotations

import numpy as np

from kinoloco.env.robot import NUM_JOINTS

ACTION_DIM = NUM_JOINTS

# (name, width) in storage order.
OBS_LAYOUT: tuple[tuple[str, int], ...] = (
    ("clock", 2),
    ("commands", 3),
    ("joint_pos", NUM_JOINTS),
    ("joint_vel", NUM_JOINTS),
    ("base_ang_vel", 3),
    ("base_euler", 3),
    ("last_actions", NUM_JOINTS),
)
PRIVILEGED_EXTRA: tuple[tuple[str, int], ...] = (
    ("friction", 1),
    ("mass_scale", 1),
    ("base_lin_vel", 3),
    ("push_force", 2),
    ("push_torque", 3),
    ("tracking_diff", NUM_JOINTS),
    ("stance_mask", 2),
    ("feet_contact", 2),
)
PRIVILEGED_LAYOUT = OBS_LAYOUT + PRIVILEGED_EXTRA

OBS_FRAMES = 15
PRIVILEGED_FRAMES = 3


def _slices(layout):
    out, start = {}, 0
    for name, width in layout:
        out[name] = slice(start, start + width)
        start += width
    return out, start


OBS_SLICES, OBS_DIM = _slices(OBS_LAYOUT)
PRIVILEGED_SLICES, PRIVILEGED_DIM = _slices(PRIVILEGED_LAYOUT)
STACKED_OBS_DIM = OBS_FRAMES * OBS_DIM
STACKED_PRIVILEGED_DIM = PRIVILEGED_FRAMES * PRIVILEGED_DIM

# Scales applied to raw quantities before they enter a frame.
OBS_SCALES = {
    "commands": np.array([2.0, 2.0, 0.25]),
    "joint_pos": 1.0,
    "joint_vel": 0.05,
    "base_ang_vel": 1.0,
    "base_euler": 1.0,
    "base_lin_vel": 2.0,
}


def pack(parts: dict[str, np.ndarray], layout) -> np.ndarray:
    """Concatenate named blocks along the last axis in layout order, checking widths."""
    blocks = []
    for name, width in layout:
        block = np.asarray(parts[name], dtype=float)
        if block.shape[-1] != width:
            raise ValueError(f"block {name!r} has width {block.shape[-1]}, expected {width}")
        blocks.append(block)
    return np.concatenate(blocks, axis=-1)


def build_frame(parts: dict[str, np.ndarray]) -> np.ndarray:
    return pack(parts, OBS_LAYOUT)


def build_privileged_frame(parts: dict[str, np.ndarray]) -> np.ndarray:
    return pack(parts, PRIVILEGED_LAYOUT)


class FrameStack:
    """Fixed-depth history per environment; slot 0 holds the newest frame."""

    def __init__(self, num_envs: int, num_frames: int, frame_dim: int):
        self.num_frames = num_frames
        self.frame_dim = frame_dim
        self.buffer = np.zeros((num_envs, num_frames, frame_dim))

    def reset(self, mask: np.ndarray | None = None) -> None:
        if mask is None:
            self.buffer[:] = 0.0
        else:
            self.buffer[np.asarray(mask, dtype=bool)] = 0.0

    def push(self, frame: np.ndarray) -> None:
        self.buffer[:, 1:] = self.buffer[:, :-1].copy()
        self.buffer[:, 0] = frame

    def flat(self) -> np.ndarray:
        return self.buffer.reshape(self.buffer.shape[0], -1).copy()
