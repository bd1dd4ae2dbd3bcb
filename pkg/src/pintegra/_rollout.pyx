# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rollout kernel for the built-in plants and costs.

Mirrors ``pintegra.dynamics`` and ``pintegra.costs`` expression for
expression; the parameter vectors are packed by ``kernel_params()`` on the
Python side. Rollout ``k`` writes only ``out[k]`` so the result does not
depend on the thread count.
"""

from cython.parallel import parallel, prange
from libc.math cimport INFINITY, atan, cos, fmod, isfinite, sin, sqrt, M_PI
from libc.stdlib cimport free, malloc

cdef enum:
    MAX_DIM = 32


cdef inline double _clamp(double v, double lo, double hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef inline double _huber(double x, double w) noexcept nogil:
    cdef double xx = x * x
    return xx / (sqrt(xx + w * w) + w)


cdef inline double _wrap(double theta) noexcept nogil:
    cdef double r = fmod(M_PI - theta, 2.0 * M_PI)
    if r != 0.0 and r < 0.0:
        r = r + 2.0 * M_PI
    return M_PI - r


cdef inline void _pendulum(const double* p, const double* x, const double* u, double* out) noexcept nogil:
    # p = mass, length, damping, gravity, dt
    cdef double inertia = p[0] * p[1] * p[1]
    cdef double alpha = (-p[2] * x[1] - p[0] * p[3] * p[1] * sin(x[0]) + u[0]) / inertia
    out[0] = _wrap(x[0] + p[4] * x[1])
    out[1] = x[1] + p[4] * alpha


cdef inline void _hovercraft(const double* p, const double* x, const double* u, double* out) noexcept nogil:
    # p = mass, inertia, arm, drag, angular_drag, lag, dt
    cdef double dt = p[6]
    cdef double thrust = x[6] + x[7]
    cdef double ax = (thrust * cos(x[2]) - p[3] * x[3]) / p[0]
    cdef double ay = (thrust * sin(x[2]) - p[3] * x[4]) / p[0]
    cdef double alpha = (p[2] * (x[6] - x[7]) - p[4] * x[5]) / p[1]
    out[0] = x[0] + dt * x[3]
    out[1] = x[1] + dt * x[4]
    out[2] = x[2] + dt * x[5]
    out[3] = x[3] + dt * ax
    out[4] = x[4] + dt * ay
    out[5] = x[5] + dt * alpha
    out[6] = x[6] + (dt / p[5]) * (u[0] - x[6])
    out[7] = x[7] + (dt / p[5]) * (u[1] - x[7])


cdef inline void _quadrotor(const double* p, const double* x, const double* u, double* out) noexcept nogil:
    # p = mass, arm, ixx, iyy, izz, k_f, k_m, lag, gravity, dt
    cdef double mass = p[0], arm = p[1], ixx = p[2], iyy = p[3], izz = p[4]
    cdef double kf = p[5], km = p[6], lag = p[7], g = p[8], dt = p[9]
    cdef double qw = x[6], qx = x[7], qy = x[8], qz = x[9]
    cdef double wx = x[10], wy = x[11], wz = x[12]
    cdef double f0 = kf * x[13] * x[13], f1 = kf * x[14] * x[14]
    cdef double f2 = kf * x[15] * x[15], f3 = kf * x[16] * x[16]
    cdef double m0 = km * x[13] * x[13], m1 = km * x[14] * x[14]
    cdef double m2 = km * x[15] * x[15], m3 = km * x[16] * x[16]
    cdef double thrust = f0 + f1 + f2 + f3
    cdef double tau_x = arm * (f1 - f3)
    cdef double tau_y = arm * (f2 - f0)
    cdef double tau_z = m0 - m1 + m2 - m3
    cdef double ax = thrust * (2.0 * (qx * qz + qw * qy)) / mass
    cdef double ay = thrust * (2.0 * (qy * qz - qw * qx)) / mass
    cdef double az = thrust * (1.0 - 2.0 * (qx * qx + qy * qy)) / mass - g
    cdef double dwx = (tau_x - (wy * izz * wz - wz * iyy * wy)) / ixx
    cdef double dwy = (tau_y - (wz * ixx * wx - wx * izz * wz)) / iyy
    cdef double dwz = (tau_z - (wx * iyy * wy - wy * ixx * wx)) / izz
    cdef double nw = qw + dt * (-0.5 * (qx * wx + qy * wy + qz * wz))
    cdef double nx = qx + dt * (0.5 * (qw * wx + qy * wz - qz * wy))
    cdef double ny = qy + dt * (0.5 * (qw * wy - qx * wz + qz * wx))
    cdef double nz = qz + dt * (0.5 * (qw * wz + qx * wy - qy * wx))
    cdef double norm = sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
    cdef int i
    for i in range(3):
        out[i] = x[i] + dt * x[3 + i]
    out[3] = x[3] + dt * ax
    out[4] = x[4] + dt * ay
    out[5] = x[5] + dt * az
    out[6] = nw / norm
    out[7] = nx / norm
    out[8] = ny / norm
    out[9] = nz / norm
    out[10] = wx + dt * dwx
    out[11] = wy + dt * dwy
    out[12] = wz + dt * dwz
    for i in range(4):
        out[13 + i] = x[13 + i] + (dt / lag) * (u[i] - x[13 + i])


cdef inline void _car(const double* p, const double* x, const double* u, double* out) noexcept nogil:
    # p = mass, inertia, lf, lr, front_stiffness, rear_stiffness, drag, slip_speed,
    #     steer_lag, force_lag, dt
    cdef double mass = p[0], inertia = p[1], lf = p[2], lr = p[3]
    cdef double dt = p[10]
    cdef double psi = x[2], vx = x[3], vy = x[4], r = x[5], delta = x[6], fr = x[7]
    cdef double vxs = sqrt(vx * vx + p[7] * p[7])
    cdef double alpha_f = delta - atan((vy + lf * r) / vxs)
    cdef double alpha_r = -atan((vy - lr * r) / vxs)
    cdef double ffy = p[4] * alpha_f
    cdef double fry = p[5] * alpha_r
    cdef double sd = sin(delta), cd = cos(delta), sp = sin(psi), cp = cos(psi)
    cdef double dvx = (fr - ffy * sd - p[6] * vx) / mass + vy * r
    cdef double dvy = (fry + ffy * cd) / mass - vx * r
    cdef double dr = (lf * ffy * cd - lr * fry) / inertia
    out[0] = x[0] + dt * (vx * cp - vy * sp)
    out[1] = x[1] + dt * (vx * sp + vy * cp)
    out[2] = psi + dt * r
    out[3] = vx + dt * dvx
    out[4] = vy + dt * dvy
    out[5] = r + dt * dr
    out[6] = delta + (dt / p[8]) * (u[0] - delta)
    out[7] = fr + (dt / p[9]) * (u[1] - fr)


cdef inline void _step(int model, const double* p, const double* x, const double* u, double* out) noexcept nogil:
    if model == 0:
        _pendulum(p, x, u, out)
    elif model == 1:
        _hovercraft(p, x, u, out)
    elif model == 2:
        _quadrotor(p, x, u, out)
    else:
        _car(p, x, u, out)


cdef inline double _cost(int kind, const double* c, const double* x) noexcept nogil:
    cdef double a, b, dx, dy, d, v, proj, cos_err, ex, ey, ez, v2, rate, rotor, e, dv
    if kind == 0:
        a = 1.0 + cos(x[0])
        return a * a + x[1] * x[1]
    elif kind == 1:
        # c = tx, ty, w_d, w_v, w_theta, w_F
        dx = c[0] - x[0]
        dy = c[1] - x[1]
        d = sqrt(dx * dx + dy * dy)
        v = sqrt(x[3] * x[3] + x[4] * x[4])
        proj = cos(x[2]) * dx + sin(x[2]) * dy
        if d > 0.0:
            cos_err = proj / d
        else:
            cos_err = 1.0
        return (_huber(d, c[2]) + _huber(v, c[3]) + _huber(cos_err - 1.0, c[4])
                + c[5] * (x[6] * x[6] + x[7] * x[7]))
    elif kind == 2:
        # c = tx, ty, tz, cos(yaw/2), sin(yaw/2), w_pos, w_v, w_q, w_omega, w_Omega
        a = c[3]
        b = c[4]
        ex = a * x[7] + b * x[8]
        ey = a * x[8] - b * x[7]
        ez = a * x[9] - b * x[6]
        v2 = x[3] * x[3] + x[4] * x[4] + x[5] * x[5]
        rate = sqrt(x[10] * x[10] + x[11] * x[11] + x[12] * x[12])
        rotor = sqrt(x[13] * x[13] + x[14] * x[14] + x[15] * x[15] + x[16] * x[16])
        return (_huber(x[0] - c[0], c[5]) + _huber(x[1] - c[1], c[5]) + _huber(x[2] - c[2], c[5])
                + c[6] * v2 + c[7] * sqrt(ex * ex + ey * ey + ez * ez) + c[8] * rate + c[9] * rotor)
    else:
        # c = track_weight, speed
        a = 0.5 * x[0]
        e = a * a + x[1] * x[1] - 1.0
        dv = x[3] - c[1]
        return c[0] * e * e + dv * dv


cdef double _simulate_one(int model, const double* p, int kind, const double* c,
                          const double[::1] x0, const double[:, ::1] mean,
                          const double[:, :, ::1] eps, Py_ssize_t k,
                          const double[::1] umin, const double[::1] umax,
                          double* x, double* xn, double* u) noexcept nogil:
    cdef Py_ssize_t n = x0.shape[0], m = mean.shape[0], T = mean.shape[1]
    cdef Py_ssize_t t, i
    cdef double total = 0.0
    cdef double* tmp
    for i in range(n):
        x[i] = x0[i]
    for t in range(T):
        total += _cost(kind, c, x)
        for i in range(m):
            u[i] = _clamp(mean[i, t] + eps[k, i, t], umin[i], umax[i])
        _step(model, p, x, u, xn)
        tmp = x
        x = xn
        xn = tmp
    total += _cost(kind, c, x)
    if not isfinite(total):
        return INFINITY
    return total


def rollout_costs(int model, const double[::1] params, int kind, const double[::1] cost_params,
                  const double[::1] x0, const double[:, ::1] mean, const double[:, :, ::1] eps,
                  const double[::1] umin, const double[::1] umax, double[::1] out, int threads=1):
    """State cost ``S_x`` of every rollout ``u = clamp(mean + eps[k])``.

    Non-finite totals are replaced by ``+inf``.
    """
    cdef Py_ssize_t K = eps.shape[0]
    cdef Py_ssize_t k
    cdef double* x
    cdef double* xn
    cdef double* u
    cdef const double* p = &params[0]
    cdef const double* c = &cost_params[0]
    if x0.shape[0] > MAX_DIM or mean.shape[0] > MAX_DIM:
        raise ValueError("state or control dimension too large for the kernel")
    if out.shape[0] != K or eps.shape[1] != mean.shape[0] or eps.shape[2] != mean.shape[1]:
        raise ValueError("inconsistent rollout shapes")
    if threads < 1:
        threads = 1
    with nogil, parallel(num_threads=threads):
        x = <double*> malloc(MAX_DIM * sizeof(double))
        xn = <double*> malloc(MAX_DIM * sizeof(double))
        u = <double*> malloc(MAX_DIM * sizeof(double))
        for k in prange(K, schedule="static"):
            out[k] = _simulate_one(model, p, kind, c, x0, mean, eps, k, umin, umax, x, xn, u)
        free(x)
        free(xn)
        free(u)


def step(int model, const double[::1] params, const double[::1] x, const double[::1] u, double[::1] out):
    """Single plant step (used to cross-check against the numpy models)."""
    with nogil:
        _step(model, &params[0], &x[0], &u[0], &out[0])


def cost(int kind, const double[::1] cost_params, const double[::1] x):
    return _cost(kind, &cost_params[0], &x[0])
