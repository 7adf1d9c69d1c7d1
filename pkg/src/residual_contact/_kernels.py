"""Compiled scalar kernels shared by the rollout, belief and oracle paths.

State vectors are float64 arrays laid out as ``[x, z, theta, vx, vz, omega]``.
Everything here is allocation-light and works on one body at a time; the
Python-level modules wrap these with typed objects.
"""
import math

import numpy as np
from numba import njit

CONTACT_TOL = 1e-4          # activation tolerance on vertex height, m
TOI_TOL = 1e-7              # bisection tolerance on the impact time, s
REST_SPEED = 1e-3           # m/s
MAX_IMPULSES_PER_STEP = 16
LOG_COLUMNS = 14
RESIDUAL_DRAWS = 11         # first draw plus the belief filter's 10 retries
ENERGY_TOL = 1e-9           # J, same allowance as the belief feasibility filter

# impulse resolution modes
STICK = 0
SLIDE = 1
STICK_CLAMPED = 2
SLIDE_CLAMPED = 3
FRICTIONLESS = 4


@njit(cache=True)
def ballistic(s, g, tau, out):
    out[0] = s[0] + s[3] * tau
    out[1] = s[1] + s[4] * tau - 0.5 * g * tau * tau
    out[2] = s[2] + s[5] * tau
    out[3] = s[3]
    out[4] = s[4] - g * tau
    out[5] = s[5]


@njit(cache=True)
def vertex_offset(theta, verts, i):
    c = math.cos(theta)
    sn = math.sin(theta)
    bx = verts[i, 0]
    bz = verts[i, 1]
    return c * bx - sn * bz, sn * bx + c * bz


@njit(cache=True)
def vertex_height_at(s, g, tau, verts, i):
    z = s[1] + s[4] * tau - 0.5 * g * tau * tau
    th = s[2] + s[5] * tau
    _, rz = vertex_offset(th, verts, i)
    return z + rz


@njit(cache=True)
def lowest_vertex(s, verts):
    """Index and height of the lowest vertex; near-ties go to the smaller world x."""
    best = -1
    best_z = np.inf
    best_x = np.inf
    for i in range(verts.shape[0]):
        rx, rz = vertex_offset(s[2], verts, i)
        z = s[1] + rz
        x = s[0] + rx
        if z < best_z - 1e-12 or (abs(z - best_z) <= 1e-12 and x < best_x):
            best = i
            best_z = z
            best_x = x
    return best, best_z


@njit(cache=True)
def contact_velocity(s, rx, rz):
    return s[3] - s[5] * rz, s[4] + s[5] * rx


@njit(cache=True)
def delassus(m, inertia, rx, rz):
    """Entries of J M^-1 J^T for a contact at offset r from the COM."""
    a00 = 1.0 / m + rz * rz / inertia
    a01 = -rx * rz / inertia
    a11 = 1.0 / m + rx * rx / inertia
    return a00, a01, a11


@njit(cache=True)
def find_impact(s, g, verts, remaining, skip):
    """Earliest vertex crossing of z=0 within ``remaining`` seconds.

    Returns ``(tau, vertex)``; vertex is -1 when nothing crosses.
    """
    best_tau = np.inf
    best_i = -1
    best_z = np.inf
    for i in range(verts.shape[0]):
        if (skip >> i) & 1:
            continue
        z_end = vertex_height_at(s, g, remaining, verts, i)
        if z_end >= 0.0:
            continue
        z0 = vertex_height_at(s, g, 0.0, verts, i)
        if z0 < 0.0:
            rx, rz = vertex_offset(s[2], verts, i)
            _, vn = contact_velocity(s, rx, rz)
            if vn < 0.0:
                tau = 0.0
            else:
                tau = remaining
        else:
            lo = 0.0
            hi = remaining
            while hi - lo > TOI_TOL:
                mid = 0.5 * (lo + hi)
                if vertex_height_at(s, g, mid, verts, i) < 0.0:
                    hi = mid
                else:
                    lo = mid
            tau = lo
        zt = vertex_height_at(s, g, tau, verts, i)
        if tau < best_tau or (tau == best_tau and zt < best_z):
            best_tau = tau
            best_i = i
            best_z = zt
    return best_tau, best_i


@njit(cache=True)
def _kinetic_change(pt, pn, vt, vn, a00, a01, a11):
    return pt * vt + pn * vn + 0.5 * (pt * (a00 * pt + a01 * pn) + pn * (a01 * pt + a11 * pn))


@njit(cache=True)
def resolve_frame(vt, vn, a00, a01, a11, mu, eps):
    """Newton restitution with Coulomb friction in the contact frame.

    Solves the sticking system first and projects onto the friction cone when
    it is violated. Returns ``(p_t, p_n, mode)``.
    """
    det = a00 * a11 - a01 * a01
    e = eps
    mode = STICK
    dt_ = -vt
    dn = -(1.0 + e) * vn
    pt = (a11 * dt_ - a01 * dn) / det
    pn = (-a01 * dt_ + a00 * dn) / det
    if pn >= 0.0 and abs(pt) <= mu * pn:
        if _kinetic_change(pt, pn, vt, vn, a00, a01, a11) <= 0.0:
            return pt, pn, mode
        # Newton restitution can inject energy when tangential and normal
        # directions are coupled; shrink restitution to the largest energy-safe value.
        mc00 = a11 / det
        mc01 = -a01 / det
        mc11 = a00 / det
        q = mc00 * vt * vt + 2.0 * mc01 * vt * vn
        e2 = 1.0 + q / (mc11 * vn * vn)
        e = min(eps, math.sqrt(max(e2, 0.0)))
        mode = STICK_CLAMPED
        dn = -(1.0 + e) * vn
        pt = (a11 * dt_ - a01 * dn) / det
        pn = (-a01 * dt_ + a00 * dn) / det
        if pn >= 0.0 and abs(pt) <= mu * pn:
            return pt, pn, mode

    if mu > 0.0:
        if pt > 0.0:
            d = 1.0
        elif pt < 0.0:
            d = -1.0
        else:
            d = -1.0 if vt > 0.0 else 1.0
        den = a11 + d * mu * a01
        if den > 1e-12 * a11:
            k = 1.0 + e
            c = -vn / den
            ut = d * mu * c
            un = c
            uv = ut * vt + un * vn
            uau = ut * (a00 * ut + a01 * un) + un * (a01 * ut + a11 * un)
            mode = SLIDE if mode == STICK else SLIDE_CLAMPED
            if k * uv + 0.5 * k * k * uau > 0.0:
                kstar = -2.0 * uv / uau
                if kstar >= 1.0:
                    k = kstar
                    mode = SLIDE_CLAMPED
                else:
                    k = -1.0
            if k > 0.0:
                pn = k * c
                pt = d * mu * pn
                return pt, pn, mode

    pn = -(1.0 + e) * vn / a11
    return 0.0, pn, FRICTIONLESS


@njit(cache=True)
def apply_contact_impulse(s, m, inertia, rx, rz, pt, pn):
    s[3] += pt / m
    s[4] += pn / m
    s[5] += (-rz * pt + rx * pn) / inertia


# ---------------------------------------------------------------------------
# residual policy forward pass

@njit(cache=True)
def policy_forward(theta, sizes, x, out):
    """Dense tanh network; ``sizes`` lists layer widths input first."""
    n_layers = sizes.shape[0] - 1
    width = 0
    for k in range(sizes.shape[0]):
        if sizes[k] > width:
            width = sizes[k]
    a = np.empty(width)
    b = np.empty(width)
    for j in range(sizes[0]):
        a[j] = x[j]
    off = 0
    for layer in range(n_layers):
        n_in = sizes[layer]
        n_out = sizes[layer + 1]
        bias_off = off + n_in * n_out
        for o in range(n_out):
            acc = theta[bias_off + o]
            row = off + o * n_in
            for j in range(n_in):
                acc += theta[row + j] * a[j]
            if layer < n_layers - 1:
                b[o] = math.tanh(acc)
            else:
                b[o] = acc
        off = bias_off + n_out
        for o in range(n_out):
            a[o] = b[o]
    for o in range(sizes[n_layers]):
        out[o] = a[o]


@njit(cache=True)
def stopping_momentum(m00, m01, m11, vt, vn):
    """Norm of the impulse that brings the contact point to rest, ``|M_c v_c|``."""
    return math.hypot(m00 * vt + m01 * vn, m01 * vt + m11 * vn)


@njit(cache=True)
def distribution_from_output(out, impulse_scale, sigma_scale, sigma_min, p_ref):
    """Map raw network outputs to mean and a floored 2x2 covariance.

    Mean and std are in units of ``p_ref``, the contact's stopping momentum,
    so the residual shrinks with the approach speed.
    """
    mt = impulse_scale * p_ref * out[0]
    mn = impulse_scale * p_ref * out[1]
    st = sigma_scale * p_ref * math.exp(min(max(out[2], -30.0), 30.0))
    sn = sigma_scale * p_ref * math.exp(min(max(out[3], -30.0), 30.0))
    rho = 0.99 * math.tanh(out[4])
    c00 = st * st
    c11 = sn * sn
    c01 = rho * st * sn
    # eigenvalue floor at sigma_min^2
    floor = sigma_min * sigma_min
    tr = 0.5 * (c00 + c11)
    diff = 0.5 * (c00 - c11)
    rad = math.sqrt(diff * diff + c01 * c01)
    l1 = tr + rad
    l2 = tr - rad
    if l2 < floor:
        if rad > 0.0:
            # eigenvector of l1
            ang = 0.5 * math.atan2(2.0 * c01, c00 - c11)
            ca = math.cos(ang)
            sa = math.sin(ang)
            l1 = max(l1, floor)
            l2 = floor
            c00 = l1 * ca * ca + l2 * sa * sa
            c11 = l1 * sa * sa + l2 * ca * ca
            c01 = (l1 - l2) * ca * sa
        else:
            c00 = max(c00, floor)
            c11 = max(c11, floor)
            c01 = 0.0
    return mt, mn, c00, c01, c11


@njit(cache=True)
def residual_sample(theta, sizes, shift, scale, impulse_scale, sigma_scale, sigma_min,
                    a00, a01, a11, vt, vn, z0, z1, stochastic):
    det = a00 * a11 - a01 * a01
    m00, m01, m11 = a11 / det, -a01 / det, a00 / det
    x = np.empty(5)
    x[0] = (m00 - shift[0]) / scale[0]
    x[1] = (m01 - shift[1]) / scale[1]
    x[2] = (m11 - shift[2]) / scale[2]
    x[3] = (vt - shift[3]) / scale[3]
    x[4] = (vn - shift[4]) / scale[4]
    out = np.empty(sizes[sizes.shape[0] - 1])
    policy_forward(theta, sizes, x, out)
    p_ref = stopping_momentum(m00, m01, m11, vt, vn)
    mt, mn, c00, c01, c11 = distribution_from_output(out, impulse_scale, sigma_scale, sigma_min,
                                                     p_ref)
    if not stochastic:
        return mt, mn
    l00 = math.sqrt(c00)
    l10 = c01 / l00
    l11 = math.sqrt(max(c11 - l10 * l10, 0.0))
    return mt + l00 * z0, mn + l10 * z0 + l11 * z1


@njit(cache=True)
def project_out(s, verts):
    """Lift the body so no vertex is below the ground; velocities are untouched.

    Sequential single-vertex impulses cannot always finish a resting contact
    within a step, and a vertex left below z=0 is never crossed again.
    """
    _, zmin = lowest_vertex(s, verts)
    if zmin < 0.0:
        s[1] -= zmin


# ---------------------------------------------------------------------------
# time stepping

@njit(cache=True)
def step(s, dt, verts, m, inertia, g, mu, eps, use_policy, stochastic,
         theta, sizes, shift, scale, impulse_scale, sigma_scale, sigma_min,
         zbuf, event_index, prev_active, rg, log_buf, log_count):
    """Advance ``s`` in place by one timestep.

    Returns ``(contact_active, event_index, at_rest, log_count, rejected)``.
    The residual is applied only to the first impulse of a contact event, that
    is the first impulse after a timestep without contact; ``rejected`` counts
    residual draws refused for adding kinetic energy.
    """
    tmp = np.empty(6)
    remaining = dt
    active = False
    at_rest = False
    skip = 0
    n_imp = 0
    t_local = 0.0
    rejected = 0
    while remaining > 0.0 and n_imp < MAX_IMPULSES_PER_STEP:
        tau, i = find_impact(s, g, verts, remaining, skip)
        if i < 0:
            break
        ballistic(s, g, tau, tmp)
        s[:] = tmp
        remaining -= tau
        t_local += tau
        rx, rz = vertex_offset(s[2], verts, i)
        vt, vn = contact_velocity(s, rx, rz)
        if vn >= 0.0:
            skip |= 1 << i
            continue
        a00, a01, a11 = delassus(m, inertia, rx, rz)
        pt, pn, _ = resolve_frame(vt, vn, a00, a01, a11, mu, eps)
        starts_event = not active and not prev_active
        if use_policy and starts_event:
            # residual draws that would add kinetic energy are redrawn, as in
            # belief propagation; if every draw fails the analytical impulse stands
            k = event_index if event_index < zbuf.shape[0] else zbuf.shape[0] - 1
            n_draws = zbuf.shape[1] // 2 if stochastic else 1
            for a in range(n_draws):
                rt, rn = residual_sample(theta, sizes, shift, scale, impulse_scale, sigma_scale,
                                         sigma_min, a00, a01, a11, vt, vn,
                                         zbuf[k, 2 * a], zbuf[k, 2 * a + 1], stochastic)
                if _kinetic_change(pt + rt, pn + rn, vt, vn, a00, a01, a11) <= ENERGY_TOL:
                    pt += rt
                    pn += rn
                    break
                rejected += 1
        if starts_event:
            event_index += 1
        apply_contact_impulse(s, m, inertia, rx, rz, pt, pn)
        active = True
        n_imp += 1
        skip = 0
        if log_count < log_buf.shape[0]:
            log_buf[log_count, 0] = t_local
            log_buf[log_count, 1] = i
            log_buf[log_count, 2:8] = s
            log_buf[log_count, 8] = vt
            log_buf[log_count, 9] = vn
            log_buf[log_count, 10] = a00
            log_buf[log_count, 11] = a01
            log_buf[log_count, 12] = a11
            log_buf[log_count, 13] = 1.0 if starts_event else 0.0
            log_count += 1
        _, vn_post = contact_velocity(s, rx, rz)
        speed = math.sqrt(s[3] * s[3] + s[4] * s[4])
        if abs(vn_post) < REST_SPEED and speed < REST_SPEED and abs(s[5]) * rg < REST_SPEED:
            s[3] = 0.0
            s[4] = 0.0
            s[5] = 0.0
            at_rest = True
            remaining = 0.0
            break
    if remaining > 0.0:
        ballistic(s, g, remaining, tmp)
        s[:] = tmp
    project_out(s, verts)
    return active, event_index, at_rest, log_count, rejected


@njit(cache=True)
def simulate(s0, n_steps, dt, verts, m, inertia, g, mu, eps, use_policy, stochastic,
             theta, sizes, shift, scale, impulse_scale, sigma_scale, sigma_min, zbuf,
             out, log_buf):
    """Fixed-rate rollout; writes ``n_steps`` states (the first is ``s0``) into ``out``.

    Returns ``(n_events, n_logged, n_rejected)``. Each impulse appends a ``log_buf`` row
    ``[time, vertex, post-impulse state (6), v_t, v_n, a00, a01, a11, event_start]``
    where time is in units of dt from ``s0`` and ``a`` is ``J M^-1 J^T``.
    """
    rg = math.sqrt(inertia / m)
    s = s0.copy()
    out[0, :] = s
    prev_active = False
    event_index = 0
    rest = False
    n_logged = 0
    n_rejected = 0
    for k in range(1, n_steps):
        if rest:
            out[k, :] = s
            continue
        before = n_logged
        active, event_index, rest, n_logged, rejected = step(
            s, dt, verts, m, inertia, g, mu, eps, use_policy, stochastic,
            theta, sizes, shift, scale, impulse_scale, sigma_scale, sigma_min,
            zbuf, event_index, prev_active, rg, log_buf, n_logged)
        for j in range(before, n_logged):
            log_buf[j, 0] = (k - 1) + log_buf[j, 0] / dt
        n_rejected += rejected
        prev_active = active
        out[k, :] = s
    return event_index, n_logged, n_rejected


@njit(cache=True)
def is_resting(s, verts, rg):
    _, zmin = lowest_vertex(s, verts)
    speed = math.sqrt(s[3] * s[3] + s[4] * s[4])
    return zmin <= CONTACT_TOL and speed < REST_SPEED and abs(s[5]) * rg < REST_SPEED


@njit(cache=True)
def flight_to_contact(s, t, t_end, dt, verts, m, inertia, g):
    """Fly ``s`` from time ``t`` to its next approaching impact, in place.

    Intervals follow the global grid ``k * dt`` so impact times match
    :func:`simulate`. Returns ``(status, time, vertex)`` with status 0 for an
    impact, 1 when ``t_end`` is reached first and 2 for a resting body.
    """
    rg = math.sqrt(inertia / m)
    if is_resting(s, verts, rg):
        return 2, t, -1
    tmp = np.empty(6)
    while t < t_end:
        k = math.floor(t / dt + 1e-9)
        t_next = min((k + 1) * dt, t_end)
        remaining = t_next - t
        skip = 0
        while remaining > 0.0:
            tau, i = find_impact(s, g, verts, remaining, skip)
            if i < 0:
                break
            ballistic(s, g, tau, tmp)
            s[:] = tmp
            remaining -= tau
            t += tau
            rx, rz = vertex_offset(s[2], verts, i)
            _, vn = contact_velocity(s, rx, rz)
            if vn < 0.0:
                return 0, t, i
            skip |= 1 << i
        if remaining > 0.0:
            ballistic(s, g, remaining, tmp)
            s[:] = tmp
        project_out(s, verts)
        t = t_next
    return 1, t, -1


@njit(cache=True)
def scaled_rmse(est, obs, rg):
    n = est.shape[0]
    acc = 0.0
    for k in range(n):
        dx = est[k, 0] - obs[k, 0]
        dz = est[k, 1] - obs[k, 1]
        dth = rg * (est[k, 2] - obs[k, 2])
        acc += dx * dx + dz * dz + dth * dth
    return math.sqrt(acc / n)


@njit(cache=True)
def batch_losses(obs, obs_index, n_steps, dt, verts, m, inertia, g, mu, eps,
                 use_policy, stochastic, thetas, theta_index, sizes, shift, scale,
                 impulse_scale, sigma_scale, sigma_min, zbufs, z_index):
    """Trajectory losses of many rollouts without storing them.

    Rollout ``b`` starts from ``obs[obs_index[b], 0]``, uses parameter row
    ``thetas[theta_index[b]]`` and noise ``zbufs[z_index[b]]``, and is scored
    against ``obs[obs_index[b]]``. Also returns, per rollout, the number of
    contact events and of rejected residual draws.
    """
    n = obs_index.shape[0]
    losses = np.empty(n)
    counts = np.zeros((n, 2), dtype=np.int64)
    buf = np.empty((n_steps, 6))
    log_buf = np.empty((0, LOG_COLUMNS))
    rg = math.sqrt(inertia / m)
    for b in range(n):
        o = obs_index[b]
        n_ev, _, n_rej = simulate(
            obs[o, 0], n_steps, dt, verts, m, inertia, g, mu, eps, use_policy, stochastic,
            thetas[theta_index[b]], sizes, shift, scale, impulse_scale, sigma_scale,
            sigma_min, zbufs[z_index[b]], buf, log_buf)
        losses[b] = scaled_rmse(buf, obs[o, :n_steps], rg)
        counts[b, 0] = n_ev
        counts[b, 1] = n_rej
    return losses, counts


# ---------------------------------------------------------------------------
# compliant-contact reference simulator

@njit(cache=True)
def compliant_simulate(s0, n_samples, substeps, h, verts, m, inertia, g,
                       stiffness, damping, mu, v_reg, out):
    """Spring-damper contact with regularized Coulomb friction, symplectic Euler.

    Writes every ``substeps``-th state into ``out``. Returns the largest
    relative energy growth observed over any contact phase and the deepest
    vertex penetration seen.
    """
    s = s0.copy()
    out[0, :] = s
    nv = verts.shape[0]
    in_contact = False
    e_start = 0.0
    worst_growth = -np.inf
    deepest = 0.0
    for k in range(1, n_samples):
        for _ in range(substeps):
            fx = 0.0
            fz = -m * g
            tq = 0.0
            touching = False
            c = math.cos(s[2])
            sn = math.sin(s[2])
            for i in range(nv):
                rx = c * verts[i, 0] - sn * verts[i, 1]
                rz = sn * verts[i, 0] + c * verts[i, 1]
                z = s[1] + rz
                if z < 0.0:
                    touching = True
                    if -z > deepest:
                        deepest = -z
                    vt = s[3] - s[5] * rz
                    vn = s[4] + s[5] * rx
                    fn = stiffness * (-z) - damping * vn
                    if fn < 0.0:
                        fn = 0.0
                    ft = -mu * fn * math.tanh(vt / v_reg)
                    fx += ft
                    fz += fn
                    tq += rx * fn - rz * ft
            if touching and not in_contact:
                e_start = (0.5 * m * (s[3] * s[3] + s[4] * s[4]) + 0.5 * inertia * s[5] * s[5]
                           + m * g * s[1])
            if in_contact and not touching:
                e_end = (0.5 * m * (s[3] * s[3] + s[4] * s[4]) + 0.5 * inertia * s[5] * s[5]
                         + m * g * s[1])
                if e_start != 0.0:
                    growth = (e_end - e_start) / abs(e_start)
                    if growth > worst_growth:
                        worst_growth = growth
            in_contact = touching
            s[3] += h * fx / m
            s[4] += h * fz / m
            s[5] += h * tq / inertia
            s[0] += h * s[3]
            s[1] += h * s[4]
            s[2] += h * s[5]
        out[k, :] = s
    return worst_growth, deepest
