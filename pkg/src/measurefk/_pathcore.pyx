# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled path kernel: per-path loops mirroring ``_pathcore_py`` exactly.

Each path is a pure function of (seed, path_index); blocks fill disjoint
result slots, so the caller may run blocks on any number of threads and still
get byte-identical output.  Only constant-coefficient processes compile;
callable coefficients stay on the numpy fallback.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, M_PI, cos, exp, floor, log, pow, sin, sqrt, tan
from libc.stdint cimport int8_t, int64_t, uint64_t

from ._packing import (BatchResult, DIFFUSION, DOM_BALL, DOM_BOX, DOM_FULL,
                       EXIT_BOUNDARY, EXIT_CENSORED, EXIT_CLOCK, EXIT_JUMP,
                       OU, STABLE)

cdef extern from *:
    ctypedef unsigned long long uint128 "__uint128_t"

DEF MAXD = 8

cdef uint64_t M0 = 0xD2E7470EE14C6C93ULL
cdef uint64_t M1 = 0xCA5A826395121157ULL
cdef uint64_t W0 = 0x9E3779B97F4A7C15ULL
cdef uint64_t W1 = 0xBB67AE8584CAA73BULL
cdef double INV53 = 1.0 / 9007199254740992.0
cdef double HALF54 = 0.5 / 9007199254740992.0

cdef int C_DIFFUSION = DIFFUSION
cdef int C_STABLE = STABLE
cdef int C_OU = OU
cdef int C_DOM_BOX = DOM_BOX
cdef int C_DOM_BALL = DOM_BALL
cdef int C_DOM_FULL = DOM_FULL
cdef int8_t K_BOUNDARY = EXIT_BOUNDARY
cdef int8_t K_JUMP = EXIT_JUMP
cdef int8_t K_CLOCK = EXIT_CLOCK
cdef int8_t K_CENSORED = EXIT_CENSORED


cdef inline void philox_block(uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3,
                              uint64_t k0, uint64_t k1, uint64_t* out) noexcept nogil:
    cdef uint64_t x0 = c0, x1 = c1, x2 = c2, x3 = c3
    cdef uint64_t kk0 = k0, kk1 = k1
    cdef uint128 p0, p1
    cdef uint64_t hi0, lo0, hi1, lo1
    cdef int rnd
    for rnd in range(10):
        if rnd > 0:
            kk0 = kk0 + W0
            kk1 = kk1 + W1
        p0 = <uint128>M0 * x0
        p1 = <uint128>M1 * x2
        hi0 = <uint64_t>(p0 >> 64)
        lo0 = <uint64_t>p0
        hi1 = <uint64_t>(p1 >> 64)
        lo1 = <uint64_t>p1
        x0 = hi1 ^ x1 ^ kk0
        x1 = lo1
        x2 = hi0 ^ x3 ^ kk1
        x3 = lo0
    out[0] = x0
    out[1] = x1
    out[2] = x2
    out[3] = x3


cdef struct Stream:
    uint64_t seed
    uint64_t path
    int64_t block
    uint64_t w[4]


cdef inline double stream_uniform(Stream* s, int64_t j) noexcept nogil:
    cdef int64_t b = j >> 2
    if b != s.block:
        philox_block(<uint64_t>b, 0ULL, s.path, 0ULL, s.seed, 0ULL, s.w)
        s.block = b
    return <double>(s.w[j & 3] >> 11) * INV53 + HALF54


cdef inline double clock_uniform(uint64_t seed, uint64_t path) noexcept nogil:
    cdef uint64_t w[4]
    philox_block(0ULL, 1ULL, path, 0ULL, seed, 0ULL, w)
    return <double>(w[0] >> 11) * INV53 + HALF54


cdef inline double ppnd16(double p) noexcept nogil:
    """AS241 inverse normal CDF; same coefficients as rng.normal_inv_cdf."""
    cdef double q = p - 0.5
    cdef double r, num, den, val
    if -0.425 <= q <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    if q < 0.0:
        r = p
    else:
        r = 1.0 - p
    r = sqrt(-log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


cdef inline int64_t cell_of(const double* x, int dim, const double* clo,
                            const double* cw, const int64_t* cshape,
                            const int64_t* cstride) noexcept nogil:
    cdef int64_t flat = 0
    cdef int64_t idx
    cdef int k
    for k in range(dim):
        idx = <int64_t>floor((x[k] - clo[k]) / cw[k])
        if idx < 0:
            idx = 0
        elif idx >= cshape[k]:
            idx = cshape[k] - 1
        flat += idx * cstride[k]
    return flat


def run_block(proc, dom, x0, int n_paths, int64_t path0, uint64_t seed,
              int64_t n_steps_cap, cells=None, wg=None, wmu=None,
              bint want_occ=False, chk_steps=None, bint record=False):
    """Drop-in replacement for ``_pathcore_py.run_block`` (no recording)."""
    if record:
        raise NotImplementedError("trajectory recording runs on the numpy backend")
    if proc.var_fields is not None:
        raise ValueError("variable coefficients run on the numpy backend")

    cdef int kind = proc.kind
    cdef int d = proc.dim
    if d > MAXD:
        raise ValueError(f"compiled kernel supports dimension <= {MAXD}")
    cdef double dt = proc.dt
    cdef int draws = proc.draws_per_step
    cdef int dom_kind = dom.kind

    x0_arr = np.ascontiguousarray(np.asarray(x0, dtype=np.float64).reshape(d))
    cdef double[::1] x0v = x0_arr

    # domain geometry
    lo_arr = np.ascontiguousarray(np.asarray(dom.lo, dtype=np.float64).reshape(-1))
    hi_arr = np.ascontiguousarray(np.asarray(dom.hi, dtype=np.float64).reshape(-1))
    cen_arr = np.ascontiguousarray(np.asarray(dom.center, dtype=np.float64).reshape(-1))
    cdef double[::1] dlo = lo_arr
    cdef double[::1] dhi = hi_arr
    cdef double[::1] dcen = cen_arr
    cdef double radius = dom.radius

    # process parameters (flattened row-major)
    cdef double[::1] step_b
    cdef double[::1] drift_dt
    cdef double[::1] atil
    cdef double kill_rate = 0.0
    cdef double alpha = 0.0, jump_scale = 0.0
    cdef double[::1] drift_half
    cdef bint has_stable_drift = False
    cdef double[::1] ou_e
    cdef double[::1] ou_c
    cdef double lam = 0.0
    zero1 = np.zeros(1)
    step_b = zero1; drift_dt = zero1; atil = zero1
    drift_half = zero1; ou_e = zero1; ou_c = zero1
    if kind == C_DIFFUSION:
        step_b = np.ascontiguousarray(proc.step_b, dtype=np.float64).reshape(-1)
        drift_dt = np.ascontiguousarray(proc.drift_dt, dtype=np.float64).reshape(-1)
        atil = np.ascontiguousarray(proc.atil, dtype=np.float64).reshape(-1)
        kill_rate = proc.kill_rate
    elif kind == C_STABLE:
        alpha = proc.alpha
        jump_scale = proc.jump_scale
        if proc.drift_half_dt is not None:
            drift_half = np.ascontiguousarray(proc.drift_half_dt, dtype=np.float64).reshape(-1)
            has_stable_drift = True
    else:
        ou_e = np.ascontiguousarray(proc.ou_e, dtype=np.float64).reshape(-1)
        ou_c = np.ascontiguousarray(proc.ou_c, dtype=np.float64).reshape(-1)
        lam = proc.lam
    cdef bint has_clock = (kind == C_OU) or (kind == C_DIFFUSION and kill_rate > 0.0)

    # cells and weights
    cdef bint use_cells = cells is not None and (wg is not None or wmu is not None or want_occ)
    cdef double[::1] clo = zero1
    cdef double[::1] cw = zero1
    cdef int64_t[::1] cshape = np.zeros(1, dtype=np.int64)
    cdef int64_t[::1] cstride = np.zeros(1, dtype=np.int64)
    cdef bint has_wg = wg is not None
    cdef bint has_wmu = wmu is not None
    cdef double[::1] wgv = zero1
    cdef double[::1] wmuv = zero1
    occ_arr = None
    cdef double[::1] occv = zero1
    cdef bint do_occ = False
    if use_cells:
        clo = np.ascontiguousarray(cells.lo, dtype=np.float64)
        cw = np.ascontiguousarray(cells.widths, dtype=np.float64)
        cshape = np.ascontiguousarray(np.asarray(cells.shape, dtype=np.int64))
        cstride = np.ascontiguousarray(cells.strides)
        if has_wg:
            wgv = np.ascontiguousarray(wg, dtype=np.float64)
        if has_wmu:
            wmuv = np.ascontiguousarray(wmu, dtype=np.float64)
        if want_occ:
            occ_arr = np.zeros(cells.n_cells)
            occv = occ_arr
            do_occ = True

    # checkpoints
    cdef int n_chk = 0
    cdef int64_t[::1] chk = np.zeros(1, dtype=np.int64)
    if chk_steps is not None:
        chk = np.ascontiguousarray(np.asarray(chk_steps, dtype=np.int64))
        n_chk = chk.shape[0]

    # outputs
    lifetime_arr = np.full(n_paths, n_steps_cap * dt)
    exit_arr = np.full(n_paths, K_CENSORED, dtype=np.int8)
    accg_arr = np.zeros(n_paths)
    accmu_arr = np.zeros(n_paths)
    cdef double[::1] lifetime = lifetime_arr
    cdef int8_t[::1] exit_kind = exit_arr
    cdef double[::1] accg = accg_arr
    cdef double[::1] accmu = accmu_arr
    chk_state_arr = chk_alive_arr = chk_g_arr = chk_mu_arr = None
    cdef double[:, :, ::1] chk_state = np.zeros((1, 1, 1))
    cdef int8_t[:, ::1] chk_alive = np.zeros((1, 1), dtype=np.int8)
    cdef double[:, ::1] chk_g = np.zeros((1, 1))
    cdef double[:, ::1] chk_mu = np.zeros((1, 1))
    if n_chk:
        chk_state_arr = np.full((n_paths, n_chk, d), np.nan)
        chk_alive_arr = np.zeros((n_paths, n_chk), dtype=np.int8)
        chk_g_arr = np.zeros((n_paths, n_chk))
        chk_mu_arr = np.zeros((n_paths, n_chk))
        chk_state = chk_state_arr
        chk_alive = chk_alive_arr
        chk_g = chk_g_arr
        chk_mu = chk_mu_arr

    cdef int p
    with nogil:
        for p in range(n_paths):
            _one_path(kind, d, dt, draws, dom_kind,
                      &x0v[0], &dlo[0], &dhi[0], &dcen[0], radius,
                      &step_b[0], &drift_dt[0], &atil[0], kill_rate,
                      alpha, jump_scale, has_stable_drift, &drift_half[0],
                      &ou_e[0], &ou_c[0], lam, has_clock,
                      use_cells, &clo[0], &cw[0], &cshape[0], &cstride[0],
                      has_wg, &wgv[0], has_wmu, &wmuv[0], do_occ, &occv[0],
                      n_chk, &chk[0],
                      chk_state, chk_alive, chk_g, chk_mu,
                      seed, <uint64_t>(path0 + p), p, n_steps_cap,
                      &lifetime[0], &exit_kind[0], &accg[0], &accmu[0])

    res = BatchResult(lifetime=lifetime_arr, exit_kind=exit_arr,
                      acc_g=accg_arr, acc_mu=accmu_arr, occ=occ_arr)
    if n_chk:
        res.chk_state = chk_state_arr
        res.chk_alive = chk_alive_arr
        res.chk_acc_g = chk_g_arr
        res.chk_acc_mu = chk_mu_arr
    return res, None


cdef void _one_path(int kind, int d, double dt, int draws, int dom_kind,
                    const double* x0, const double* dlo, const double* dhi,
                    const double* dcen, double radius,
                    const double* step_b, const double* drift_dt,
                    const double* atil, double kill_rate,
                    double alpha, double jump_scale, bint has_stable_drift,
                    const double* drift_half,
                    const double* ou_e, const double* ou_c, double lam,
                    bint has_clock,
                    bint use_cells, const double* clo, const double* cw,
                    const int64_t* cshape, const int64_t* cstride,
                    bint has_wg, const double* wgv, bint has_wmu,
                    const double* wmuv, bint do_occ, double* occv,
                    int n_chk, const int64_t* chk,
                    double[:, :, ::1] chk_state, int8_t[:, ::1] chk_alive,
                    double[:, ::1] chk_g, double[:, ::1] chk_mu,
                    uint64_t seed, uint64_t path_id, int slot,
                    int64_t n_steps_cap,
                    double* lifetime, int8_t* exit_kind, double* accg_out,
                    double* accmu_out) noexcept nogil:
    cdef double x[MAXD]
    cdef double xn[MAXD]
    cdef double z[MAXD]
    cdef Stream s
    cdef int j, kk
    cdef int64_t k, cell
    cdef double acc_g = 0.0, acc_mu = 0.0, rate_acc = 0.0
    cdef double thresh = INFINITY
    cdef double acc, ub, event_dt, dur, rate_now
    cdef int8_t ev_kind
    cdef double theta, w, sjump, v, rho
    cdef int chk_ptr = 0
    cdef bint dying

    s.seed = seed
    s.path = path_id
    s.block = -1
    for j in range(d):
        x[j] = x0[j]
    if has_clock:
        thresh = -log(clock_uniform(seed, path_id))

    k = 0
    while k < n_steps_cap:
        while chk_ptr < n_chk and chk[chk_ptr] == k:
            for j in range(d):
                chk_state[slot, chk_ptr, j] = x[j]
            chk_alive[slot, chk_ptr] = 1
            chk_g[slot, chk_ptr] = acc_g
            chk_mu[slot, chk_ptr] = acc_mu
            chk_ptr += 1

        event_dt = INFINITY
        ev_kind = -1
        rate_now = 0.0

        if kind == C_DIFFUSION:
            for j in range(d):
                z[j] = ppnd16(stream_uniform(&s, k * draws + j))
            ub = stream_uniform(&s, k * draws + d)
            for j in range(d):
                acc = x[j] + drift_dt[j]
                for kk in range(d):
                    acc = acc + step_b[j * d + kk] * z[kk]
                xn[j] = acc
            rate_now = kill_rate
            if dom_kind != C_DOM_FULL:
                if _boundary_event(d, dom_kind, dlo, dhi, dcen, radius, atil,
                                   dt, x, xn, ub):
                    event_dt = dt / 2.0
                    ev_kind = K_BOUNDARY
        elif kind == C_STABLE:
            if d == 1:
                theta = M_PI * (stream_uniform(&s, k * draws) - 0.5)
                w = -log(stream_uniform(&s, k * draws + 1))
                if alpha == 1.0:
                    sjump = tan(theta)
                else:
                    sjump = (sin(alpha * theta) / pow(cos(theta), 1.0 / alpha)
                             * pow(cos((1.0 - alpha) * theta) / w,
                                   (1.0 - alpha) / alpha))
                if has_stable_drift:
                    xn[0] = x[0] + drift_half[0] + jump_scale * sjump + drift_half[0]
                else:
                    xn[0] = x[0] + jump_scale * sjump
            else:
                rho = alpha / 2.0
                theta = M_PI * stream_uniform(&s, k * draws)
                w = -log(stream_uniform(&s, k * draws + 1))
                v = pow(pow(sin(rho * theta), rho)
                        * pow(sin((1.0 - rho) * theta), 1.0 - rho) / sin(theta),
                        1.0 / (1.0 - rho))
                v = pow(v / w, (1.0 - rho) / rho)
                for j in range(d):
                    z[j] = ppnd16(stream_uniform(&s, k * draws + 2 + j))
                for j in range(d):
                    if has_stable_drift:
                        xn[j] = (x[j] + drift_half[j]
                                 + jump_scale * sqrt(2.0 * v) * z[j] + drift_half[j])
                    else:
                        xn[j] = x[j] + jump_scale * sqrt(2.0 * v) * z[j]
            if dom_kind != C_DOM_FULL:
                if not _inside_c(d, dom_kind, dlo, dhi, dcen, radius, xn):
                    event_dt = dt / 2.0
                    ev_kind = K_JUMP
        else:  # OU
            for j in range(d):
                z[j] = ppnd16(stream_uniform(&s, k * draws + j))
            for j in range(d):
                acc = 0.0
                for kk in range(d):
                    acc = acc + ou_e[j * d + kk] * x[kk]
                for kk in range(d):
                    acc = acc + ou_c[j * d + kk] * z[kk]
                xn[j] = acc
            rate_now = lam

        if has_clock and rate_now > 0.0:
            acc = (thresh - rate_acc) / rate_now
            if acc <= (event_dt if event_dt < dt else dt):
                event_dt = acc
                ev_kind = K_CLOCK

        dying = event_dt != INFINITY
        dur = event_dt if dying else dt

        if use_cells:
            cell = cell_of(x, d, clo, cw, cshape, cstride)
            if do_occ:
                occv[cell] += dur
            if has_wg:
                acc_g += wgv[cell] * dur
            if has_wmu:
                acc_mu += wmuv[cell] * dur
        if has_clock and rate_now > 0.0:
            rate_acc += rate_now * dur

        if dying:
            lifetime[slot] = k * dt + event_dt
            exit_kind[slot] = ev_kind
            accg_out[slot] = acc_g
            accmu_out[slot] = acc_mu
            while chk_ptr < n_chk:
                chk_g[slot, chk_ptr] = acc_g
                chk_mu[slot, chk_ptr] = acc_mu
                chk_ptr += 1
            return
        for j in range(d):
            x[j] = xn[j]
        k += 1

    # censored at the cap
    accg_out[slot] = acc_g
    accmu_out[slot] = acc_mu
    while chk_ptr < n_chk:
        for j in range(d):
            chk_state[slot, chk_ptr, j] = x[j]
        chk_alive[slot, chk_ptr] = 1
        chk_g[slot, chk_ptr] = acc_g
        chk_mu[slot, chk_ptr] = acc_mu
        chk_ptr += 1


cdef inline bint _inside_c(int d, int dom_kind, const double* dlo,
                           const double* dhi, const double* dcen,
                           double radius, const double* pt) noexcept nogil:
    cdef int j
    cdef double r2
    if dom_kind == C_DOM_BOX:
        for j in range(d):
            if pt[j] <= dlo[j] or pt[j] >= dhi[j]:
                return False
        return True
    r2 = 0.0
    for j in range(d):
        r2 += (pt[j] - dcen[j]) * (pt[j] - dcen[j])
    return r2 < radius * radius


cdef inline bint _boundary_event(int d, int dom_kind, const double* dlo,
                                 const double* dhi, const double* dcen,
                                 double radius, const double* atil, double dt,
                                 const double* x, const double* xn,
                                 double ub) noexcept nogil:
    """True when the step exits: endpoint outside, or bridge crossing of the
    nearest face beats the step's uniform."""
    cdef int j, kk
    cdef double d1, d2, e1, e2, score, best_score, best_prod, ann
    cdef double rx, rn, nj, p_ret
    cdef double nrm[MAXD]
    if not _inside_c(d, dom_kind, dlo, dhi, dcen, radius, xn):
        return True
    if dom_kind == C_DOM_BOX:
        best_score = INFINITY
        best_prod = 0.0
        for j in range(d):
            ann = atil[j * d + j]
            d1 = x[j] - dlo[j]
            d2 = xn[j] - dlo[j]
            score = d1 + d2
            if score < best_score:
                best_score = score
                best_prod = d1 * d2 / (ann * dt)
            e1 = dhi[j] - x[j]
            e2 = dhi[j] - xn[j]
            score = e1 + e2
            if score < best_score:
                best_score = score
                best_prod = e1 * e2 / (ann * dt)
        return ub < exp(-best_prod)
    # ball: half-space correction against the tangent plane at the old normal
    rx = 0.0
    for j in range(d):
        rx += (x[j] - dcen[j]) * (x[j] - dcen[j])
    rx = sqrt(rx)
    if rx > 0.0:
        for j in range(d):
            nrm[j] = (x[j] - dcen[j]) / rx
    else:
        for j in range(d):
            nrm[j] = 0.0
        nrm[0] = 1.0
    ann = 0.0
    for j in range(d):
        for kk in range(d):
            ann += nrm[j] * atil[j * d + kk] * nrm[kk]
    rn = 0.0
    for j in range(d):
        rn += (xn[j] - dcen[j]) * (xn[j] - dcen[j])
    rn = sqrt(rn)
    d1 = radius - rx
    d2 = radius - rn
    p_ret = exp(-d1 * d2 / (ann * dt))
    return ub < p_ret
