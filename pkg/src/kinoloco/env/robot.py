"""Robot description: loading, validation and flattening into simulator arrays."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np
import yaml

from kinoloco.errors import InvalidConfigError
from kinoloco.kinodyn import GROUPS

NUM_JOINTS = 16
LEFT_LEG = slice(0, 6)
RIGHT_LEG = slice(6, 12)
LEFT_ARM = slice(12, 14)
RIGHT_ARM = slice(14, 16)
ARM_JOINTS = np.arange(12, 16)
# Offsets inside a leg block.
HIP_ROLL, HIP_YAW, HIP_PITCH, KNEE, ANKLE_PITCH, ANKLE_ROLL = range(6)
SHOULDER_PITCH, ELBOW_PITCH = 0, 1

_LINK_KEYS = {"name", "parent", "group", "mass", "com", "shape", "joint", "contacts"}
_JOINT_KEYS = {"name", "axis", "origin", "default", "kp", "kd", "torque_limit", "armature", "damping"}


@dataclass(frozen=True)
class JointSpec:
    name: str
    axis: np.ndarray
    origin: np.ndarray
    default: float
    kp: float
    kd: float
    torque_limit: float
    armature: float = 0.0
    damping: float = 0.0


@dataclass(frozen=True)
class LinkSpec:
    name: str
    parent: int
    group: str
    mass: float
    com: np.ndarray
    inertia: np.ndarray
    joint: JointSpec | None
    contacts: np.ndarray


class ModelArrays(NamedTuple):
    """Flat arrays consumed by the compiled dynamics kernels."""

    parent: np.ndarray  # (n,) int64, -1 for the base
    joint_axis: np.ndarray  # (n, 3) in the parent frame
    joint_origin: np.ndarray  # (n, 3) in the parent frame
    com_local: np.ndarray  # (n, 3)
    mass: np.ndarray  # (n,)
    inertia_local: np.ndarray  # (n, 3, 3) about the link CoM
    ancestors: np.ndarray  # (n, max_depth) body indices on the path from the base, -1 padded
    depth: np.ndarray  # (n,)
    armature: np.ndarray  # (n - 1,)
    damping: np.ndarray  # (n - 1,)
    contact_body: np.ndarray  # (k,)
    contact_point: np.ndarray  # (k, 3)


def _shape_inertia(shape: dict, mass: float, where: str) -> np.ndarray:
    if not isinstance(shape, dict) or len(shape) != 1:
        raise InvalidConfigError("shape must be {box: [...]} or {capsule: [...]}", key=where)
    kind, dims = next(iter(shape.items()))
    dims = [float(d) for d in dims]
    if kind == "box" and len(dims) == 3:
        lx, ly, lz = dims
        return mass / 12.0 * np.diag([ly**2 + lz**2, lx**2 + lz**2, lx**2 + ly**2])
    if kind == "capsule" and len(dims) == 2:
        length, radius = dims
        transverse = mass * (3 * radius**2 + length**2) / 12.0
        return np.diag([transverse, transverse, 0.5 * mass * radius**2])
    raise InvalidConfigError(f"unsupported shape {shape}", key=where)


def _vec3(value, where: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise InvalidConfigError(f"expected a finite 3-vector, got {value!r}", key=where)
    return arr


@dataclass(frozen=True)
class RobotSpec:
    name: str
    links: tuple[LinkSpec, ...]
    gravity: float = 9.81

    # -- construction -----------------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "RobotSpec":
        unknown = set(data) - {"name", "gravity", "links"}
        if unknown:
            raise InvalidConfigError(f"unknown keys {sorted(unknown)}", key="robot")
        names: dict[str, int] = {}
        links = []
        for i, raw in enumerate(data.get("links", [])):
            where = f"links[{i}]"
            extra = set(raw) - _LINK_KEYS
            if extra:
                raise InvalidConfigError(f"unknown keys {sorted(extra)}", key=where)
            name = raw["name"]
            parent_name = raw.get("parent")
            if parent_name is None:
                if i != 0:
                    raise InvalidConfigError("only the first link may be the base", key=where)
                parent = -1
            elif parent_name not in names:
                raise InvalidConfigError(f"parent {parent_name!r} must precede the link", key=where)
            else:
                parent = names[parent_name]
            group = raw["group"]
            if group not in GROUPS:
                raise InvalidConfigError(f"unknown group {group!r}", key=f"{where}.group")
            mass = float(raw["mass"])
            if not mass > 0:
                raise InvalidConfigError("mass must be positive", key=f"{where}.mass")
            joint = None
            if parent >= 0:
                jraw = raw.get("joint")
                if jraw is None:
                    raise InvalidConfigError("non-base links need a joint", key=where)
                extra = set(jraw) - _JOINT_KEYS
                if extra:
                    raise InvalidConfigError(f"unknown keys {sorted(extra)}", key=f"{where}.joint")
                axis = _vec3(jraw["axis"], f"{where}.joint.axis")
                joint = JointSpec(
                    name=jraw["name"],
                    axis=axis / np.linalg.norm(axis),
                    origin=_vec3(jraw["origin"], f"{where}.joint.origin"),
                    default=float(jraw.get("default", 0.0)),
                    kp=float(jraw["kp"]),
                    kd=float(jraw["kd"]),
                    torque_limit=float(jraw["torque_limit"]),
                    armature=float(jraw.get("armature", 0.0)),
                    damping=float(jraw.get("damping", 0.0)),
                )
            contacts = np.asarray(raw.get("contacts", []), dtype=float).reshape(-1, 3)
            links.append(
                LinkSpec(
                    name=name,
                    parent=parent,
                    group=group,
                    mass=mass,
                    com=_vec3(raw.get("com", [0, 0, 0]), f"{where}.com"),
                    inertia=_shape_inertia(raw["shape"], mass, f"{where}.shape"),
                    joint=joint,
                    contacts=contacts,
                )
            )
            names[name] = i
        spec = cls(name=data.get("name", "robot"), links=tuple(links), gravity=float(data.get("gravity", 9.81)))
        spec.validate()
        return spec

    @classmethod
    def load(cls, path: str | Path | None = None) -> "RobotSpec":
        """Load a robot file; ``None`` loads the bundled surrogate."""
        if path is None:
            text = resources.files("kinoloco").joinpath("data/robot.yaml").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(yaml.safe_load(text))

    @classmethod
    def default(cls) -> "RobotSpec":
        return cls.load(None)

    def validate(self) -> None:
        if self.num_joints != NUM_JOINTS:
            raise InvalidConfigError(f"expected {NUM_JOINTS} joints, got {self.num_joints}", key="links")
        if sum(len(l.contacts) for l in self.links) == 0:
            raise InvalidConfigError("robot has no contact points", key="links")

    # -- derived quantities -----------------------------------------------------------
    @property
    def num_links(self) -> int:
        return len(self.links)

    @property
    def num_joints(self) -> int:
        return sum(1 for l in self.links if l.joint is not None)

    @property
    def joints(self) -> list[JointSpec]:
        return [l.joint for l in self.links[1:]]

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def group_tags(self) -> tuple[str, ...]:
        return tuple(l.group for l in self.links)

    @property
    def total_mass(self) -> float:
        return float(sum(l.mass for l in self.links))

    def joint_array(self, field: str) -> np.ndarray:
        return np.array([getattr(j, field) for j in self.joints], dtype=float)

    @property
    def default_joint_positions(self) -> np.ndarray:
        return self.joint_array("default")

    @property
    def foot_links(self) -> list[int]:
        return [i for i, l in enumerate(self.links) if len(l.contacts)]

    def arrays(self) -> ModelArrays:
        n = self.num_links
        parent = np.array([l.parent for l in self.links], dtype=np.int64)
        depth = np.zeros(n, dtype=np.int64)
        chains = []
        for i in range(n):
            chain = []
            b = i
            while b > 0:
                chain.append(b)
                b = parent[b]
            chains.append(chain[::-1])
            depth[i] = len(chain)
        ancestors = -np.ones((n, max(1, depth.max())), dtype=np.int64)
        for i, chain in enumerate(chains):
            ancestors[i, : len(chain)] = chain
        joint_axis = np.zeros((n, 3))
        joint_origin = np.zeros((n, 3))
        for i, l in enumerate(self.links):
            if l.joint is not None:
                joint_axis[i] = l.joint.axis
                joint_origin[i] = l.joint.origin
        contact_body = np.array(
            [i for i, l in enumerate(self.links) for _ in range(len(l.contacts))], dtype=np.int64
        )
        contact_point = np.concatenate([l.contacts for l in self.links if len(l.contacts)], axis=0)
        return ModelArrays(
            parent=parent,
            joint_axis=joint_axis,
            joint_origin=joint_origin,
            com_local=np.stack([l.com for l in self.links]),
            mass=np.array([l.mass for l in self.links]),
            inertia_local=np.stack([l.inertia for l in self.links]),
            ancestors=ancestors,
            depth=depth,
            armature=self.joint_array("armature"),
            damping=self.joint_array("damping"),
            contact_body=contact_body,
            contact_point=np.ascontiguousarray(contact_point),
        )


# Left/right mirror of the joint vector: swap sides, negate roll and yaw joints.
def mirror_permutation() -> tuple[np.ndarray, np.ndarray]:
    perm = np.concatenate([np.arange(6, 12), np.arange(0, 6), np.arange(14, 16), np.arange(12, 14)])
    sign = np.ones(NUM_JOINTS)
    for leg in (0, 6):
        sign[leg + HIP_ROLL] = -1.0
        sign[leg + HIP_YAW] = -1.0
        sign[leg + ANKLE_ROLL] = -1.0
    return perm, sign


def mirror_joints(values: np.ndarray) -> np.ndarray:
    perm, sign = mirror_permutation()
    return values[..., perm] * sign[perm]
