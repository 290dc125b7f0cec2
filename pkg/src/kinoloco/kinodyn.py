"""Centroidal kinematics of a multi-link body.

All quantities are in the world frame. Link inertia tensors are expected to be
already rotated into the world frame; nothing here performs frame conversion.

Two entry points are provided: the dataclass API (:class:`LinkState`,
:class:`BodySnapshot`, :func:`total_angular_momentum`) used for analysis and
logging, and :func:`centroidal_momentum_arrays`, a broadcasting array version
used inside the simulator where snapshots are batched over environments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from kinoloco.errors import InvalidInputError

GROUPS: tuple[str, ...] = ("left_arm", "right_arm", "left_leg", "right_leg", "torso")


@dataclass(frozen=True)
class LinkState:
    mass: float
    inertia: np.ndarray
    com_position: np.ndarray
    com_velocity: np.ndarray
    angular_velocity: np.ndarray
    group_tag: str

    def __post_init__(self):
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float).reshape(3, 3))
        for name in ("com_position", "com_velocity", "angular_velocity"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        if not np.isfinite(self.mass) or self.mass <= 0.0:
            raise InvalidInputError(f"link mass must be positive, got {self.mass}")
        if self.group_tag not in GROUPS:
            raise InvalidInputError(f"unknown group tag {self.group_tag!r}; expected one of {GROUPS}")
        inertia = self.inertia
        if not np.all(np.isfinite(inertia)):
            raise InvalidInputError("inertia tensor is not finite")
        scale = max(1.0, float(np.abs(inertia).max()))
        if not np.allclose(inertia, inertia.T, rtol=0.0, atol=1e-12 * scale):
            raise InvalidInputError("inertia tensor is not symmetric")
        if np.linalg.eigvalsh(inertia).min() < -1e-12 * scale:
            raise InvalidInputError("inertia tensor is not positive semidefinite")


@dataclass(frozen=True)
class BodySnapshot:
    links: tuple[LinkState, ...]
    timestamp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))

    def arrays(self):
        """Stack link fields into ``(masses, inertias, positions, velocities, omegas)``."""
        if not self.links:
            raise InvalidInputError("snapshot has no links")
        masses = np.array([link.mass for link in self.links])
        inertias = np.stack([link.inertia for link in self.links])
        positions = np.stack([link.com_position for link in self.links])
        velocities = np.stack([link.com_velocity for link in self.links])
        omegas = np.stack([link.angular_velocity for link in self.links])
        return masses, inertias, positions, velocities, omegas


@dataclass(frozen=True)
class MomentumReport:
    total: np.ndarray
    per_group: dict[str, np.ndarray] = field(default_factory=dict)
    com_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    com_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))


def _check_finite(*arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("non-finite input")


def whole_body_com(snapshot: BodySnapshot) -> tuple[np.ndarray, np.ndarray]:
    """Mass-weighted mean of link CoM positions and velocities."""
    masses, _, positions, velocities, _ = snapshot.arrays()
    if np.any(masses <= 0.0):
        raise InvalidInputError("link masses must be positive")
    total = masses.sum()
    return masses @ positions / total, masses @ velocities / total


def link_momentum_term(
    link: LinkState, com_position: np.ndarray, com_velocity: np.ndarray
) -> np.ndarray:
    """Angular momentum of one link about the whole-body CoM."""
    com_position = np.asarray(com_position, dtype=float)
    com_velocity = np.asarray(com_velocity, dtype=float)
    _check_finite(
        link.com_position, link.com_velocity, link.angular_velocity, com_position, com_velocity
    )
    offset = link.com_position - com_position
    rel_velocity = link.com_velocity - com_velocity
    return np.cross(offset, link.mass * rel_velocity) + link.inertia @ link.angular_velocity


def total_angular_momentum(snapshot: BodySnapshot) -> MomentumReport:
    com_position, com_velocity = whole_body_com(snapshot)
    per_group = {tag: np.zeros(3) for tag in GROUPS}
    total = np.zeros(3)
    for link in snapshot.links:
        term = link_momentum_term(link, com_position, com_velocity)
        per_group[link.group_tag] = per_group[link.group_tag] + term
        total = total + term
    return MomentumReport(
        total=total, per_group=per_group, com_position=com_position, com_velocity=com_velocity
    )


def centroidal_momentum_arrays(
    masses: np.ndarray,
    inertias: np.ndarray,
    positions: np.ndarray,
    velocities: np.ndarray,
    omegas: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Batched centroidal momentum.

    Shapes: ``masses (..., n)``, ``inertias (..., n, 3, 3)``, the remaining
    ``(..., n, 3)``. Returns ``(total, per_link, com, com_velocity)`` with
    ``per_link`` of shape ``(..., n, 3)``.
    """
    m = masses[..., None]
    total_mass = masses.sum(axis=-1)[..., None]
    com = (m * positions).sum(axis=-2) / total_mass
    com_vel = (m * velocities).sum(axis=-2) / total_mass
    offset = positions - com[..., None, :]
    rel_vel = velocities - com_vel[..., None, :]
    per_link = np.cross(offset, m * rel_vel) + np.einsum("...ij,...j->...i", inertias, omegas)
    return per_link.sum(axis=-2), per_link, com, com_vel


def group_sums(per_link: np.ndarray, group_tags: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Sum per-link momentum terms by group tag (last-but-one axis is the link axis)."""
    tags = np.asarray(group_tags)
    return {tag: per_link[..., tags == tag, :].sum(axis=-2) for tag in GROUPS}
