# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Dormand-Prince kernel for the characteristic system.

Mirrors ``coldwave._kernels_py`` step for step (tableau, PI controller,
continuous extension, storage rules).  The stepping loop runs without the GIL
and hands control back only to grow its output buffers.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, isfinite, pow, NAN, isnan
from libc.string cimport memcpy

cnp.import_array()

BACKEND = "cython"

DEF NV = 7
DEF NRC = 35

cdef double C2 = 1.0 / 5.0, C3 = 3.0 / 10.0, C4 = 4.0 / 5.0, C5 = 8.0 / 9.0
cdef double A21 = 1.0 / 5.0
cdef double A31 = 3.0 / 40.0, A32 = 9.0 / 40.0
cdef double A41 = 44.0 / 45.0, A42 = -56.0 / 15.0, A43 = 32.0 / 9.0
cdef double A51 = 19372.0 / 6561.0, A52 = -25360.0 / 2187.0, A53 = 64448.0 / 6561.0, A54 = -212.0 / 729.0
cdef double A61 = 9017.0 / 3168.0, A62 = -355.0 / 33.0, A63 = 46732.0 / 5247.0, A64 = 49.0 / 176.0, A65 = -5103.0 / 18656.0
cdef double A71 = 35.0 / 384.0, A73 = 500.0 / 1113.0, A74 = 125.0 / 192.0, A75 = -2187.0 / 6784.0, A76 = 11.0 / 84.0
cdef double E1 = 71.0 / 57600.0, E3 = -71.0 / 16695.0, E4 = 71.0 / 1920.0, E5 = -17253.0 / 339200.0
cdef double E6 = 22.0 / 525.0, E7 = -1.0 / 40.0
cdef double D1 = -12715105075.0 / 11282082432.0
cdef double D3 = 87487479700.0 / 32700410799.0
cdef double D4 = -10690763975.0 / 1880347072.0
cdef double D5 = 701980252875.0 / 199316789632.0
cdef double D6 = -1453857185.0 / 822651844.0
cdef double D7 = 69997945.0 / 29380423.0

cdef double BETA = 0.04
cdef double EXPO1 = 0.2 - 0.75 * 0.04
cdef double SAFE = 0.9
cdef double FAC_MIN = 0.2, FAC_MAX = 10.0
cdef double UROUND = 2.220446049250313e-16

cdef enum:
    DONE = 0
    THRESHOLD = 1
    UNDERFLOW = 2
    MAX_STEPS = 3
    NONFINITE = 4
    BUFFER_FULL = 99

STATUS_DONE = DONE
STATUS_THRESHOLD = THRESHOLD
STATUS_UNDERFLOW = UNDERFLOW
STATUS_MAX_STEPS = MAX_STEPS
STATUS_NONFINITE = NONFINITE


cdef struct Ctx:
    double B0
    bint rel
    double sgn
    double t
    double t_end
    double h
    double err_old
    bint reject
    long n_acc
    long n_try
    long max_steps
    long stride
    long nfev
    double rtol
    double atol
    double threshold
    double y[NV]
    double k1[NV]
    double K1_0
    double K2_0
    double s1
    double s2
    double C1
    bint have_c1
    double drift[3]
    double last_rc[NRC]
    double last_t_old
    double last_h
    # output buffers
    double* t_buf
    double* y_buf
    double* rc_buf
    bint dense
    long cap
    long n_stored
    const double* t_eval
    double* y_eval
    long n_eval
    long i_eval


cdef inline void rhs(Ctx* c, const double* y, double* out) noexcept nogil:
    cdef double P1 = y[0], P2 = y[1], E1v = y[2], p1 = y[4], p2 = y[5], e = y[6]
    cdef double g, V1, V2, Q, q1, q2, s = c.sgn, B0 = c.B0
    if c.rel:
        g = sqrt(1.0 + P1 * P1 + P2 * P2)
        V1 = P1 / g
        V2 = P2 / g
        Q = (p1 * P1 + p2 * P2) / (g * g * g)
        q1 = p1 / g - P1 * Q
        q2 = p2 / g - P2 * Q
    else:
        V1 = P1
        V2 = P2
        q1 = p1
        q2 = p2
    out[0] = s * (-E1v - B0 * V2)
    out[1] = s * (B0 * V1)
    out[2] = s * V1
    out[3] = s * V1
    out[4] = s * (-q1 * p1 - B0 * q2 - e)
    out[5] = s * (-q1 * p2 + B0 * q1)
    out[6] = s * ((1.0 - e) * q1)


cdef inline void integrals(Ctx* c, const double* y, double* k1, double* k2) noexcept nogil:
    k1[0] = y[1] - c.B0 * y[2]
    if c.rel:
        k2[0] = 2.0 * sqrt(1.0 + y[0] * y[0] + y[1] * y[1]) + y[2] * y[2]
    else:
        k2[0] = y[0] * y[0] + y[1] * y[1] + y[2] * y[2]


cdef inline double dense_at(const double* rc, double t_old, double h, double t, int i) noexcept nogil:
    cdef double s = (t - t_old) / h
    cdef double s1 = 1.0 - s
    return rc[i] + s * (rc[NV + i] + s1 * (rc[2 * NV + i] + s * (rc[3 * NV + i] + s1 * rc[4 * NV + i])))


cdef void store(Ctx* c, double* rc) noexcept nogil:
    cdef long n = c.n_stored
    cdef int i
    c.t_buf[n] = c.t
    for i in range(NV):
        c.y_buf[n * NV + i] = c.y[i]
    if c.dense:
        memcpy(&c.rc_buf[(n - 1) * NRC], rc, NRC * sizeof(double))
    c.n_stored = n + 1


cdef double initial_step(Ctx* c) noexcept nogil:
    cdef double sk, dnf = 0.0, dny = 0.0, der2 = 0.0, h, h1, der12
    cdef double y1[NV]
    cdef double f1[NV]
    cdef int i
    for i in range(NV):
        sk = c.atol + c.rtol * fabs(c.y[i])
        dnf += (c.k1[i] / sk) ** 2
        dny += (c.y[i] / sk) ** 2
    dnf /= NV
    dny /= NV
    if dnf <= 1e-10 or dny <= 1e-10:
        h = 1e-6
    else:
        h = sqrt(dny / dnf) * 0.01
    for i in range(NV):
        y1[i] = c.y[i] + h * c.k1[i]
    rhs(c, y1, f1)
    c.nfev += 1
    for i in range(NV):
        sk = c.atol + c.rtol * fabs(c.y[i])
        der2 += ((f1[i] - c.k1[i]) / sk) ** 2
    der2 = sqrt(der2 / NV) / h
    der12 = der2 if der2 > sqrt(dnf) else sqrt(dnf)
    if der12 <= 1e-15:
        h1 = h * 1e-3 if h * 1e-3 > 1e-6 else 1e-6
    else:
        h1 = pow(0.01 / der12, 0.2)
    return h1 if h1 < 100.0 * h else 100.0 * h


cdef int run(Ctx* c) noexcept nogil:
    cdef double k2[NV]
    cdef double k3[NV]
    cdef double k4[NV]
    cdef double k5[NV]
    cdef double k6[NV]
    cdef double k7[NV]
    cdef double yt[NV]
    cdef double y1[NV]
    cdef double rc[NRC]
    cdef double h, err, sk, ev, fac11, fac, hnew, t_old, m, a, b, kk1, kk2, r, scale
    cdef double low = 0.1 * c.threshold
    cdef bint last
    cdef int i
    while True:
        if c.t >= c.t_end:
            return DONE
        if c.n_try >= c.max_steps:
            return MAX_STEPS
        if c.n_stored >= c.cap - 1:
            return BUFFER_FULL
        h = c.h
        if h < 16.0 * UROUND * (fabs(c.t) if fabs(c.t) > 1.0 else 1.0):
            return UNDERFLOW
        last = False
        if c.t + h >= c.t_end:
            h = c.t_end - c.t
            last = True
        c.n_try += 1
        for i in range(NV):
            yt[i] = c.y[i] + h * (A21 * c.k1[i])
        rhs(c, yt, k2)
        for i in range(NV):
            yt[i] = c.y[i] + h * (A31 * c.k1[i] + A32 * k2[i])
        rhs(c, yt, k3)
        for i in range(NV):
            yt[i] = c.y[i] + h * (A41 * c.k1[i] + A42 * k2[i] + A43 * k3[i])
        rhs(c, yt, k4)
        for i in range(NV):
            yt[i] = c.y[i] + h * (A51 * c.k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        rhs(c, yt, k5)
        for i in range(NV):
            yt[i] = c.y[i] + h * (A61 * c.k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        rhs(c, yt, k6)
        for i in range(NV):
            y1[i] = c.y[i] + h * (A71 * c.k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i])
        rhs(c, y1, k7)
        c.nfev += 6
        err = 0.0
        for i in range(NV):
            ev = h * (E1 * c.k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            a = fabs(c.y[i])
            b = fabs(y1[i])
            sk = c.atol + c.rtol * (a if a > b else b)
            err += (ev / sk) * (ev / sk)
        err = sqrt(err / NV)
        if not isfinite(err):
            err = 1e10
        fac11 = pow(err, EXPO1)
        fac = fac11 / pow(c.err_old, BETA)
        fac = fac / SAFE
        if fac > 1.0 / FAC_MIN:
            fac = 1.0 / FAC_MIN
        if fac < 1.0 / FAC_MAX:
            fac = 1.0 / FAC_MAX
        hnew = h / fac
        if err <= 1.0:
            c.err_old = err if err > 1e-4 else 1e-4
            for i in range(NV):
                a = y1[i] - c.y[i]
                b = h * c.k1[i] - a
                rc[i] = c.y[i]
                rc[NV + i] = a
                rc[2 * NV + i] = b
                rc[3 * NV + i] = a - h * k7[i] - b
                rc[4 * NV + i] = h * (D1 * c.k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
            t_old = c.t
            c.t = c.t_end if last else c.t + h
            for i in range(NV):
                c.y[i] = y1[i]
                c.k1[i] = k7[i]
            c.n_acc += 1
            memcpy(c.last_rc, rc, NRC * sizeof(double))
            c.last_t_old = t_old
            c.last_h = h
            while c.i_eval < c.n_eval and c.t_eval[c.i_eval] <= c.t:
                for i in range(NV):
                    c.y_eval[c.i_eval * NV + i] = dense_at(rc, t_old, h, c.t_eval[c.i_eval], i)
                c.i_eval += 1
            for i in range(NV):
                if not isfinite(c.y[i]):
                    return NONFINITE
            m = fabs(c.y[4])
            if fabs(c.y[5]) > m:
                m = fabs(c.y[5])
            if fabs(c.y[6]) > m:
                m = fabs(c.y[6])
            if m >= c.threshold:
                store(c, rc)
                return THRESHOLD
            integrals(c, c.y, &kk1, &kk2)
            a = fabs(kk1 - c.K1_0) / c.s1
            if a > c.drift[0]:
                c.drift[0] = a
            a = fabs(kk2 - c.K2_0) / c.s2
            if a > c.drift[1]:
                c.drift[1] = a
            if c.have_c1:
                scale = 1.0
                if fabs(c.y[5]) > scale:
                    scale = fabs(c.y[5])
                if fabs(c.B0) > scale:
                    scale = fabs(c.B0)
                r = fabs(c.y[5] - c.B0 - c.C1 * (c.y[6] - 1.0)) / scale
                if r > c.drift[2]:
                    c.drift[2] = r
            if c.n_acc % c.stride == 0 or m >= low or last:
                store(c, rc)
            if c.reject and hnew > h:
                hnew = h
            c.reject = False
            c.h = hnew
        else:
            fac = fac11 / SAFE
            if fac > 1.0 / FAC_MIN:
                fac = 1.0 / FAC_MIN
            c.h = h / fac
            c.reject = True


def integrate_characteristic(
    y0,
    double B0,
    bint relativistic,
    double t_end,
    double rtol,
    double atol,
    double threshold,
    double h0=0.0,
    long max_steps=50_000_000,
    long stride=1,
    t_eval=None,
    double rhs_sign=1.0,
    bint store_dense=True,
):
    cdef Ctx c
    cdef int i, code
    cdef double[::1] y0v = np.ascontiguousarray(y0, dtype=np.float64)
    cdef double[::1] tb, teval_v, yeval_v
    cdef double[:, ::1] yb
    cdef double[:, :, ::1] rb
    cdef double kk1, kk2
    if y0v.shape[0] != NV:
        raise ValueError("y0 must have 7 components")
    c.B0 = B0
    c.rel = relativistic
    c.sgn = rhs_sign
    c.t = 0.0
    c.t_end = t_end
    c.err_old = 1e-4
    c.reject = False
    c.n_acc = 0
    c.n_try = 0
    c.max_steps = max_steps
    c.stride = stride if stride > 0 else 1
    c.nfev = 0
    c.rtol = rtol
    c.atol = atol
    c.threshold = threshold
    for i in range(NV):
        c.y[i] = y0v[i]
    for i in range(3):
        c.drift[i] = 0.0
    integrals(&c, c.y, &kk1, &kk2)
    c.K1_0 = kk1
    c.K2_0 = kk2
    c.s1 = fabs(kk1) if fabs(kk1) > 1.0 else 1.0
    c.s2 = fabs(kk2) if fabs(kk2) > 1.0 else 1.0
    c.have_c1 = fabs(c.y[6] - 1.0) >= 1e-14
    c.C1 = (c.y[5] - B0) / (c.y[6] - 1.0) if c.have_c1 else NAN
    if not c.have_c1:
        c.drift[2] = NAN
    for i in range(NRC):
        c.last_rc[i] = 0.0
    c.last_t_old = 0.0
    c.last_h = 0.0
    rhs(&c, c.y, c.k1)
    c.nfev = 1
    if h0 > 0.0:
        c.h = h0
    else:
        c.h = initial_step(&c)

    c.dense = store_dense and c.stride == 1
    cap = 1024
    tb = np.empty(cap)
    yb = np.empty((cap, NV))
    rb = np.empty((cap if c.dense else 1, 5, NV))
    c.cap = cap
    c.t_buf = &tb[0]
    c.y_buf = &yb[0, 0]
    c.rc_buf = &rb[0, 0, 0]
    c.n_stored = 0
    c.t_buf[0] = 0.0
    for i in range(NV):
        c.y_buf[i] = c.y[i]
    c.n_stored = 1

    if t_eval is not None:
        teval_v = np.ascontiguousarray(t_eval, dtype=np.float64)
        n_eval = teval_v.shape[0]
        yeval_v = np.full(n_eval * NV, np.nan)
        c.n_eval = n_eval
        c.t_eval = &teval_v[0] if n_eval else NULL
        c.y_eval = &yeval_v[0] if n_eval else NULL
        c.i_eval = 0
        while c.i_eval < c.n_eval and c.t_eval[c.i_eval] <= 0.0:
            if c.t_eval[c.i_eval] == 0.0:
                for i in range(NV):
                    c.y_eval[c.i_eval * NV + i] = c.y[i]
            c.i_eval += 1
    else:
        c.n_eval = 0
        c.i_eval = 0
        c.t_eval = NULL
        c.y_eval = NULL

    while True:
        with nogil:
            code = run(&c)
        if code != BUFFER_FULL:
            break
        n = c.n_stored
        cap = 2 * cap
        tb_new = np.empty(cap)
        tb_new[:n] = np.asarray(tb)[:n]
        yb_new = np.empty((cap, NV))
        yb_new[:n] = np.asarray(yb)[:n]
        tb = tb_new
        yb = yb_new
        if c.dense:
            rb_new = np.empty((cap, 5, NV))
            rb_new[:n] = np.asarray(rb)[:n]
            rb = rb_new
        c.cap = cap
        c.t_buf = &tb[0]
        c.y_buf = &yb[0, 0]
        c.rc_buf = &rb[0, 0, 0]

    n = c.n_stored
    y_eval_out = None
    if t_eval is not None:
        y_eval_out = np.asarray(yeval_v).reshape(-1, NV).copy()
    return {
        "t": np.asarray(tb)[:n].copy(),
        "y": np.asarray(yb)[:n].copy(),
        "rcont": np.asarray(rb)[: n - 1].copy() if (c.dense and n > 1) else None,
        "y_eval": y_eval_out,
        "status": code,
        "drift": np.array([c.drift[0], c.drift[1], c.drift[2]]),
        "nsteps": c.n_acc,
        "nfev": c.nfev,
        "last_rc": np.array([c.last_rc[i] for i in range(NRC)]).reshape(5, NV) if c.n_acc else None,
        "last_t_old": c.last_t_old,
        "last_h": c.last_h,
    }
