"""Floating-base tree dynamics with spring-damper ground contact.

Generalized velocity layout per environment (22 for the 16-joint robot):
``[base CoM linear velocity (world, 3), base angular velocity (world, 3),
joint rates (16)]``. Configuration: base CoM position, base orientation
quaternion ``(w, x, y, z)`` and joint angles.

The mass matrix and velocity-product terms are assembled from per-link
Jacobians restricted to each link's ancestor joints and solved with a dense
Cholesky factorization. Integration is semi-implicit Euler: velocities first,
then positions with the updated velocities, then quaternion renormalization.

Kernels are compiled with numba, avoid heap allocation in the inner loops and
iterate over environments serially so a batch step is deterministic.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from kinoloco.env.robot import ModelArrays

NUM_BASE_DOF = 6


@njit(cache=True, inline="always")
def _cross(ax, ay, az, bx, by, bz):
    return ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx


@njit(cache=True, inline="always")
def _mv(r, x, y, z):
    return (
        r[0, 0] * x + r[0, 1] * y + r[0, 2] * z,
        r[1, 0] * x + r[1, 1] * y + r[1, 2] * z,
        r[2, 0] * x + r[2, 1] * y + r[2, 2] * z,
    )


@njit(cache=True)
def quat_to_matrix_into(q, r):
    w, x, y, z = q[0], q[1], q[2], q[3]
    r[0, 0] = 1 - 2 * (y * y + z * z)
    r[0, 1] = 2 * (x * y - w * z)
    r[0, 2] = 2 * (x * z + w * y)
    r[1, 0] = 2 * (x * y + w * z)
    r[1, 1] = 1 - 2 * (x * x + z * z)
    r[1, 2] = 2 * (y * z - w * x)
    r[2, 0] = 2 * (x * z - w * y)
    r[2, 1] = 2 * (y * z + w * x)
    r[2, 2] = 1 - 2 * (x * x + y * y)


@njit(cache=True)
def quat_to_matrix(q):
    r = np.empty((3, 3))
    quat_to_matrix_into(q, r)
    return r


@njit(cache=True)
def _compose_axis_angle(parent_rot, axis, angle, out):
    """``out = parent_rot @ Rot(axis, angle)``."""
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    x, y, z = axis[0], axis[1], axis[2]
    a00 = t * x * x + c
    a01 = t * x * y - s * z
    a02 = t * x * z + s * y
    a10 = t * x * y + s * z
    a11 = t * y * y + c
    a12 = t * y * z - s * x
    a20 = t * x * z - s * y
    a21 = t * y * z + s * x
    a22 = t * z * z + c
    for i in range(3):
        p0, p1, p2 = parent_rot[i, 0], parent_rot[i, 1], parent_rot[i, 2]
        out[i, 0] = p0 * a00 + p1 * a10 + p2 * a20
        out[i, 1] = p0 * a01 + p1 * a11 + p2 * a21
        out[i, 2] = p0 * a02 + p1 * a12 + p2 * a22


@njit(cache=True)
def _integrate_quat(q, wx, wy, wz, dt):
    """Left-multiply by the exact rotation of a constant world angular velocity, then renormalize."""
    rate = np.sqrt(wx * wx + wy * wy + wz * wz)
    w, x, y, z = q[0], q[1], q[2], q[3]
    if rate * dt > 1e-12:
        half = 0.5 * rate * dt
        s = np.sin(half) / rate
        dw = np.cos(half)
        dx, dy, dz = wx * s, wy * s, wz * s
        w, x, y, z = (
            dw * w - dx * x - dy * y - dz * z,
            dw * x + dx * w + dy * z - dz * y,
            dw * y - dx * z + dy * w + dz * x,
            dw * z + dx * y - dy * x + dz * w,
        )
    norm = np.sqrt(w * w + x * x + y * y + z * z)
    q[0] = w / norm
    q[1] = x / norm
    q[2] = y / norm
    q[3] = z / norm


@njit(cache=True)
def _workspace(n, max_depth):
    ndof = NUM_BASE_DOF + n - 1
    ncol = NUM_BASE_DOF + max_depth
    return (
        np.empty((n, 3, 3)),  # 0 rot
        np.zeros((n, 3)),  # 1 anchor
        np.zeros((n, 3)),  # 2 axis
        np.empty((n, 3)),  # 3 com
        np.empty((n, 3)),  # 4 omega
        np.empty((n, 3)),  # 5 vcom
        np.zeros((n, 3)),  # 6 alpha (velocity-product angular acceleration)
        np.zeros((n, 3)),  # 7 acc (velocity-product CoM acceleration)
        np.empty((n, 3, 3)),  # 8 world inertia
        np.empty((ndof, ndof)),  # 9 mass matrix
        np.empty(ndof),  # 10 generalized force
        np.empty((3, ncol)),  # 11 jv
        np.empty((3, ncol)),  # 12 jw
        np.empty(ncol, dtype=np.int64),  # 13 column index
        np.empty((ndof, ndof)),  # 14 cholesky factor
        np.empty(ndof),  # 15 solve scratch
    )


@njit(cache=True)
def _kinematics(model, base_mass_scale, pos, quat, theta, vel, ws):
    """Forward kinematics, link velocities and velocity-product accelerations into ``ws``."""
    rot, anchor, axis, com, omega, vcom, alpha, acc, inertia = ws[0], ws[1], ws[2], ws[3], ws[4], ws[5], ws[6], ws[7], ws[8]
    parent = model.parent
    n = parent.shape[0]
    quat_to_matrix_into(quat, rot[0])
    for k in range(3):
        anchor[0, k] = pos[k]
        omega[0, k] = vel[3 + k]
        vcom[0, k] = vel[k]
        alpha[0, k] = 0.0
        acc[0, k] = 0.0
    cl = model.com_local[0]
    ox, oy, oz = _mv(rot[0], cl[0], cl[1], cl[2])
    com[0, 0] = pos[0] + ox
    com[0, 1] = pos[1] + oy
    com[0, 2] = pos[2] + oz
    for i in range(1, n):
        p = parent[i]
        rp = rot[p]
        jo = model.joint_origin[i]
        ja = model.joint_axis[i]
        dx, dy, dz = _mv(rp, jo[0], jo[1], jo[2])
        anchor[i, 0] = anchor[p, 0] + dx
        anchor[i, 1] = anchor[p, 1] + dy
        anchor[i, 2] = anchor[p, 2] + dz
        ax, ay, az = _mv(rp, ja[0], ja[1], ja[2])
        axis[i, 0] = ax
        axis[i, 1] = ay
        axis[i, 2] = az
        _compose_axis_angle(rp, ja, theta[i - 1], rot[i])
        cl = model.com_local[i]
        cx, cy, cz = _mv(rot[i], cl[0], cl[1], cl[2])
        com[i, 0] = anchor[i, 0] + cx
        com[i, 1] = anchor[i, 1] + cy
        com[i, 2] = anchor[i, 2] + cz

        qd = vel[NUM_BASE_DOF + i - 1]
        r1x = anchor[i, 0] - com[p, 0]
        r1y = anchor[i, 1] - com[p, 1]
        r1z = anchor[i, 2] - com[p, 2]
        wpx, wpy, wpz = omega[p, 0], omega[p, 1], omega[p, 2]
        wx, wy, wz = wpx + ax * qd, wpy + ay * qd, wpz + az * qd
        omega[i, 0] = wx
        omega[i, 1] = wy
        omega[i, 2] = wz
        t1 = _cross(wpx, wpy, wpz, r1x, r1y, r1z)
        t2 = _cross(wx, wy, wz, cx, cy, cz)
        vcom[i, 0] = vcom[p, 0] + t1[0] + t2[0]
        vcom[i, 1] = vcom[p, 1] + t1[1] + t2[1]
        vcom[i, 2] = vcom[p, 2] + t1[2] + t2[2]
        s = _cross(wpx, wpy, wpz, ax, ay, az)
        apx, apy, apz = alpha[p, 0], alpha[p, 1], alpha[p, 2]
        aix, aiy, aiz = apx + s[0] * qd, apy + s[1] * qd, apz + s[2] * qd
        alpha[i, 0] = aix
        alpha[i, 1] = aiy
        alpha[i, 2] = aiz
        u1 = _cross(apx, apy, apz, r1x, r1y, r1z)
        u2 = _cross(wpx, wpy, wpz, t1[0], t1[1], t1[2])
        u3 = _cross(aix, aiy, aiz, cx, cy, cz)
        u4 = _cross(wx, wy, wz, t2[0], t2[1], t2[2])
        for k in range(3):
            acc[i, k] = acc[p, k] + u1[k] + u2[k] + u3[k] + u4[k]
    for i in range(n):
        r = rot[i]
        il = model.inertia_local[i]
        sc = base_mass_scale if i == 0 else 1.0
        for a in range(3):
            for b in range(a, 3):
                v = 0.0
                for c in range(3):
                    for d in range(3):
                        v += r[a, c] * il[c, d] * r[b, d]
                inertia[i, a, b] = v * sc
                inertia[i, b, a] = v * sc


@njit(cache=True)
def _link_jacobian(model, i, ws, px, py, pz):
    """Fill ``ws`` jv/jw/idx with the columns of link i evaluated at world point p; returns column count."""
    anchor, axis, com, jv, jw, idx = ws[1], ws[2], ws[3], ws[11], ws[12], ws[13]
    d = model.depth[i]
    ncol = NUM_BASE_DOF + d
    rx, ry, rz = px - com[0, 0], py - com[0, 1], pz - com[0, 2]
    for c in range(NUM_BASE_DOF):
        idx[c] = c
        for k in range(3):
            jv[k, c] = 0.0
            jw[k, c] = 0.0
    for k in range(3):
        jv[k, k] = 1.0
        jw[k, 3 + k] = 1.0
    # e_k x r for the base angular columns.
    jv[1, 3] = -rz
    jv[2, 3] = ry
    jv[0, 4] = rz
    jv[2, 4] = -rx
    jv[0, 5] = -ry
    jv[1, 5] = rx
    for c in range(d):
        b = model.ancestors[i, c]
        col = NUM_BASE_DOF + c
        idx[col] = NUM_BASE_DOF + b - 1
        ax, ay, az = axis[b, 0], axis[b, 1], axis[b, 2]
        jw[0, col] = ax
        jw[1, col] = ay
        jw[2, col] = az
        v = _cross(ax, ay, az, px - anchor[b, 0], py - anchor[b, 1], pz - anchor[b, 2])
        jv[0, col] = v[0]
        jv[1, col] = v[1]
        jv[2, col] = v[2]
    return ncol


@njit(cache=True)
def _assemble(model, base_mass_scale, gravity, ws):
    """Mass matrix (with armature) into ws[9] and the negated bias force into ws[10]."""
    com, omega, alpha, acc, inertia = ws[3], ws[4], ws[6], ws[7], ws[8]
    mass_matrix, force, jv, jw, idx = ws[9], ws[10], ws[11], ws[12], ws[13]
    n = model.parent.shape[0]
    ndof = NUM_BASE_DOF + n - 1
    mass_matrix[:, :] = 0.0
    force[:] = 0.0
    for i in range(n):
        m = model.mass[i] * (base_mass_scale if i == 0 else 1.0)
        ncol = _link_jacobian(model, i, ws, com[i, 0], com[i, 1], com[i, 2])
        it = inertia[i]
        fvx = m * acc[i, 0]
        fvy = m * acc[i, 1]
        fvz = m * (acc[i, 2] + gravity)
        iwx, iwy, iwz = _mv(it, omega[i, 0], omega[i, 1], omega[i, 2])
        iax, iay, iaz = _mv(it, alpha[i, 0], alpha[i, 1], alpha[i, 2])
        gx, gy, gz = _cross(omega[i, 0], omega[i, 1], omega[i, 2], iwx, iwy, iwz)
        fwx, fwy, fwz = iax + gx, iay + gy, iaz + gz
        for r in range(ncol):
            vr0, vr1, vr2 = jv[0, r], jv[1, r], jv[2, r]
            wr0, wr1, wr2 = jw[0, r], jw[1, r], jw[2, r]
            # (I jw_r) reused across the row.
            iw0, iw1, iw2 = _mv(it, wr0, wr1, wr2)
            row = idx[r]
            force[row] -= vr0 * fvx + vr1 * fvy + vr2 * fvz + wr0 * fwx + wr1 * fwy + wr2 * fwz
            for s in range(r, ncol):
                val = m * (vr0 * jv[0, s] + vr1 * jv[1, s] + vr2 * jv[2, s])
                val += iw0 * jw[0, s] + iw1 * jw[1, s] + iw2 * jw[2, s]
                col = idx[s]
                mass_matrix[row, col] += val
                if s != r:
                    mass_matrix[col, row] += val
    for j in range(n - 1):
        mass_matrix[NUM_BASE_DOF + j, NUM_BASE_DOF + j] += model.armature[j]


@njit(cache=True)
def _cholesky_solve(a, b, lower, y):
    """Solve ``a x = b`` in place into ``b`` for symmetric positive-definite ``a``."""
    n = a.shape[0]
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= lower[j, k] * lower[j, k]
        if s <= 0.0:
            return False
        d = np.sqrt(s)
        lower[j, j] = d
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s -= lower[i, k] * lower[j, k]
            lower[i, j] = s / d
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= lower[i, k] * y[k]
        y[i] = s / lower[i, i]
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= lower[k, i] * b[k]
        b[i] = s / lower[i, i]
    return True


@njit(cache=True)
def _substep(
    model, base_mass_scale, friction, kp, kd, torque_limit, targets, tau_ff, locked,
    gravity, dt, contact_k, contact_d, tangent_k, tangent_d,
    pos, quat, theta, vel, anchors, touching, torque_out, contact_force_out, ws,
):
    """One semi-implicit Euler step of one environment; returns False on a singular mass matrix."""
    _kinematics(model, base_mass_scale, pos, quat, theta, vel, ws)
    _assemble(model, base_mass_scale, gravity, ws)
    rot, anchor, com, omega, vcom = ws[0], ws[1], ws[3], ws[4], ws[5]
    mass_matrix, force, jv, idx = ws[9], ws[10], ws[11], ws[13]
    nj = theta.shape[0]
    ndof = NUM_BASE_DOF + nj
    for j in range(nj):
        qd = vel[NUM_BASE_DOF + j]
        tau = kp[j] * (targets[j] - theta[j]) - kd[j] * qd + tau_ff[j]
        lim = torque_limit[j]
        if tau > lim:
            tau = lim
        elif tau < -lim:
            tau = -lim
        torque_out[j] = tau
        force[NUM_BASE_DOF + j] += tau - model.damping[j] * qd

    for k in range(model.contact_body.shape[0]):
        b = model.contact_body[k]
        cp = model.contact_point[k]
        dx, dy, dz = _mv(rot[b], cp[0], cp[1], cp[2])
        xx, xy, xz = anchor[b, 0] + dx, anchor[b, 1] + dy, anchor[b, 2] + dz
        contact_force_out[k, 0] = 0.0
        contact_force_out[k, 1] = 0.0
        contact_force_out[k, 2] = 0.0
        if xz >= 0.0:
            touching[k] = False
            continue
        w = _cross(omega[b, 0], omega[b, 1], omega[b, 2], xx - com[b, 0], xy - com[b, 1], xz - com[b, 2])
        vx, vy, vz = vcom[b, 0] + w[0], vcom[b, 1] + w[1], vcom[b, 2] + w[2]
        if not touching[k]:
            anchors[k, 0] = xx
            anchors[k, 1] = xy
            touching[k] = True
        fn = -contact_k * xz - contact_d * vz
        if fn < 0.0:
            fn = 0.0
        ft0 = -tangent_k * (xx - anchors[k, 0]) - tangent_d * vx
        ft1 = -tangent_k * (xy - anchors[k, 1]) - tangent_d * vy
        cap = friction * fn
        mag = np.sqrt(ft0 * ft0 + ft1 * ft1)
        if mag > cap:
            scale = cap / mag
            ft0 *= scale
            ft1 *= scale
            # Slip: move the stiction anchor so the spring alone carries the capped force.
            anchors[k, 0] = xx + ft0 / tangent_k
            anchors[k, 1] = xy + ft1 / tangent_k
        contact_force_out[k, 0] = ft0
        contact_force_out[k, 1] = ft1
        contact_force_out[k, 2] = fn
        ncol = _link_jacobian(model, b, ws, xx, xy, xz)
        for r in range(ncol):
            force[idx[r]] += jv[0, r] * ft0 + jv[1, r] * ft1 + jv[2, r] * fn

    for d in range(ndof):
        if locked[d]:
            for e in range(ndof):
                mass_matrix[d, e] = 0.0
                mass_matrix[e, d] = 0.0
            mass_matrix[d, d] = 1.0
            force[d] = 0.0
            vel[d] = 0.0
    if not _cholesky_solve(mass_matrix, force, ws[14], ws[15]):
        return False
    for d in range(ndof):
        vel[d] += dt * force[d]
    for k in range(3):
        pos[k] += dt * vel[k]
    _integrate_quat(quat, vel[3], vel[4], vel[5], dt)
    for j in range(nj):
        theta[j] += dt * vel[NUM_BASE_DOF + j]
    return True


@njit(cache=True)
def step_batch(
    model, base_mass_scale, friction, kp, kd, torque_limit, targets, tau_ff, locked,
    gravity, dt, substeps, contact_k, contact_d, tangent_k, tangent_d,
    pos, quat, theta, vel, anchors, touching, torque_out, contact_force_out, ok,
):
    """Advance every environment by ``substeps`` physics steps in place.

    Per-environment arrays carry a leading batch axis. ``torque_out`` receives
    the mean applied joint torque over the substeps, ``contact_force_out`` the
    contact forces of the final substep and ``ok`` whether the environment
    stayed finite and well-posed.
    """
    nenv = pos.shape[0]
    nj = theta.shape[1]
    ws = _workspace(model.parent.shape[0], model.ancestors.shape[1])
    tau = np.empty(nj)
    for e in range(nenv):
        torque_out[e, :] = 0.0
        ok[e] = True
        for s in range(substeps):
            good = _substep(
                model, base_mass_scale[e], friction[e], kp[e], kd[e], torque_limit, targets[e],
                tau_ff[e], locked, gravity, dt, contact_k, contact_d, tangent_k, tangent_d,
                pos[e], quat[e], theta[e], vel[e], anchors[e], touching[e], tau, contact_force_out[e], ws,
            )
            if not good:
                ok[e] = False
                break
            for j in range(nj):
                torque_out[e, j] += tau[j] / substeps
        if ok[e]:
            for k in range(vel.shape[1]):
                if not np.isfinite(vel[e, k]):
                    ok[e] = False
            for k in range(3):
                if not np.isfinite(pos[e, k]):
                    ok[e] = False


@njit(cache=True)
def link_states_batch(model, base_mass_scale, pos, quat, theta, vel):
    """World CoM positions, CoM velocities, angular velocities, inertias, rotations and joint anchors."""
    nenv = pos.shape[0]
    n = model.parent.shape[0]
    com_out = np.empty((nenv, n, 3))
    vcom_out = np.empty((nenv, n, 3))
    omega_out = np.empty((nenv, n, 3))
    inertia_out = np.empty((nenv, n, 3, 3))
    rot_out = np.empty((nenv, n, 3, 3))
    anchor_out = np.empty((nenv, n, 3))
    ws = _workspace(n, model.ancestors.shape[1])
    for e in range(nenv):
        _kinematics(model, base_mass_scale[e], pos[e], quat[e], theta[e], vel[e], ws)
        rot_out[e] = ws[0]
        anchor_out[e] = ws[1]
        com_out[e] = ws[3]
        omega_out[e] = ws[4]
        vcom_out[e] = ws[5]
        inertia_out[e] = ws[8]
    return com_out, vcom_out, omega_out, inertia_out, rot_out, anchor_out


@njit(cache=True)
def contact_points_batch(model, pos, quat, theta):
    nenv = pos.shape[0]
    n = model.parent.shape[0]
    ncontact = model.contact_body.shape[0]
    out = np.empty((nenv, ncontact, 3))
    vel = np.zeros(NUM_BASE_DOF + theta.shape[1])
    ws = _workspace(n, model.ancestors.shape[1])
    for e in range(nenv):
        _kinematics(model, 1.0, pos[e], quat[e], theta[e], vel, ws)
        for k in range(ncontact):
            b = model.contact_body[k]
            cp = model.contact_point[k]
            dx, dy, dz = _mv(ws[0][b], cp[0], cp[1], cp[2])
            out[e, k, 0] = ws[1][b, 0] + dx
            out[e, k, 1] = ws[1][b, 1] + dy
            out[e, k, 2] = ws[1][b, 2] + dz
    return out


@njit(cache=True)
def mass_matrix_and_bias(model, base_mass_scale, gravity, pos, quat, theta, vel):
    """Mass matrix (including armature) and generalized bias force ``h`` for one environment."""
    ws = _workspace(model.parent.shape[0], model.ancestors.shape[1])
    _kinematics(model, base_mass_scale, pos, quat, theta, vel, ws)
    _assemble(model, base_mass_scale, gravity, ws)
    return ws[9].copy(), -ws[10]


def mechanical_energy(model: ModelArrays, base_mass_scale, gravity, pos, quat, theta, vel) -> float:
    """Kinetic (including rotor armature) plus gravitational potential energy of one environment."""
    mass_matrix, _ = mass_matrix_and_bias(model, base_mass_scale, gravity, pos, quat, theta, vel)
    com, *_ = link_states_batch(
        model, np.array([base_mass_scale]), pos[None], quat[None], theta[None], vel[None]
    )
    masses = model.mass.copy()
    masses[0] *= base_mass_scale
    return float(0.5 * vel @ mass_matrix @ vel + gravity * masses @ com[0, :, 2])
