# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: the SDP interior-point solver and the per-model
local-minimum routine.

Step-for-step port of ``_fallback.py``; all dense linear algebra is done with
small hand-written C loops (Cholesky, triangular solves, Jacobi eigenvalues,
LU) since the matrices involved are tiny.
"""

import numpy as np

from libc.stdlib cimport malloc, free
from libc.string cimport memcpy, memset
from libc.math cimport sqrt, fabs, isfinite, INFINITY, NAN

OPTIMAL, MAX_ITERATIONS, NUMERICAL_FAILURE, INFEASIBLE, UNBOUNDED = 0, 1, 2, 3, 4
LOCAL_MIN, SECOND_ORDER_POINT, NO_SECOND_ORDER_POINT, SOLVER_FAILED = 0, 1, 2, 3

BACKEND = "cython"

cdef enum:
    ST_OPTIMAL = 0
    ST_MAX_ITERATIONS = 1
    ST_NUMERICAL_FAILURE = 2
    ST_INFEASIBLE = 3
    ST_UNBOUNDED = 4
    OC_LOCAL_MIN = 0
    OC_SECOND_ORDER_POINT = 1
    OC_NO_SECOND_ORDER_POINT = 2
    OC_SOLVER_FAILED = 3
    STALL_ITERS = 8

cdef double RESCALE_THRESHOLD = 4.0
cdef double DUAL_CERT_TOL = 1e-7
cdef double DUAL_CERT_MIN = 1e-4


cdef struct Prob:
    int nv
    int me
    int nb
    int L
    const int* m
    const int* off
    const double* c
    const double* A
    const double* b
    const double* F0
    const double* F


cdef struct Result:
    int status
    int iters
    double pobj
    double dobj
    double pres
    double dres
    double gap
    double dres_abs
    double* v
    double* lam
    double* S
    double* Z
    double* mu_hist
    int mu_cap
    int mu_len


# ---------------------------------------------------------------- small linalg

cdef inline double _amax(const double* x, int n) noexcept nogil:
    cdef double r = 0.0
    cdef int i
    for i in range(n):
        if fabs(x[i]) > r:
            r = fabs(x[i])
    return r


cdef inline double _fmax(double a, double b) noexcept nogil:
    return a if a > b else b


cdef inline double _dot(const double* x, const double* y, int n) noexcept nogil:
    cdef double r = 0.0
    cdef int i
    for i in range(n):
        r += x[i] * y[i]
    return r


cdef int _chol(const double* A, double* Lo, int m) noexcept nogil:
    """Lower Cholesky factor, row-major. Returns -1 if not positive definite."""
    cdef int i, j, k
    cdef double s
    for i in range(m):
        for j in range(i + 1):
            s = A[i * m + j]
            for k in range(j):
                s -= Lo[i * m + k] * Lo[j * m + k]
            if i == j:
                if not (s > 0.0) or not isfinite(s):
                    return -1
                Lo[i * m + i] = sqrt(s)
            else:
                Lo[i * m + j] = s / Lo[j * m + j]
        for j in range(i + 1, m):
            Lo[i * m + j] = 0.0
    return 0


cdef int _chol_reg(const double* A, double* Lo, int m, double* tmp) noexcept nogil:
    cdef double d = 1.0
    cdef double delta
    cdef int i
    for i in range(m):
        if fabs(A[i * m + i]) > d:
            d = fabs(A[i * m + i])
    if _chol(A, Lo, m) == 0:
        return 0
    delta = 1e-14 * d
    while delta <= 1e-6 * d:
        memcpy(tmp, A, m * m * sizeof(double))
        for i in range(m):
            tmp[i * m + i] += delta
        if _chol(tmp, Lo, m) == 0:
            return 0
        delta *= 100.0
    return -1


cdef void _chol_solve(const double* Lo, double* r, int m) noexcept nogil:
    """Solve (Lo Lo^T) x = r in place."""
    cdef int i, k
    cdef double s
    for i in range(m):
        s = r[i]
        for k in range(i):
            s -= Lo[i * m + k] * r[k]
        r[i] = s / Lo[i * m + i]
    for i in range(m - 1, -1, -1):
        s = r[i]
        for k in range(i + 1, m):
            s -= Lo[k * m + i] * r[k]
        r[i] = s / Lo[i * m + i]


cdef void _inv_lower(const double* Lo, double* Li, int m) noexcept nogil:
    cdef int i, j, k
    cdef double s
    memset(Li, 0, m * m * sizeof(double))
    for j in range(m):
        for i in range(j, m):
            s = 1.0 if i == j else 0.0
            for k in range(j, i):
                s -= Lo[i * m + k] * Li[k * m + j]
            Li[i * m + j] = s / Lo[i * m + i]


cdef inline void _matmul(const double* X, const double* Y, double* out, int m) noexcept nogil:
    cdef int i, j, k
    cdef double s
    for i in range(m):
        for j in range(m):
            s = 0.0
            for k in range(m):
                s += X[i * m + k] * Y[k * m + j]
            out[i * m + j] = s


cdef double _min_eig(double* W, int m) noexcept nogil:
    """Smallest eigenvalue of a symmetric matrix by cyclic Jacobi (W destroyed)."""
    cdef int sweep, p, q, k
    cdef double off, tot, app, aqq, apq, theta, t, cs, sn, akp, akq, r
    if m == 0:
        return INFINITY
    for sweep in range(60):
        off = 0.0
        tot = 0.0
        for p in range(m):
            for q in range(m):
                tot += W[p * m + q] * W[p * m + q]
                if p != q:
                    off += W[p * m + q] * W[p * m + q]
        if off <= 1e-30 * tot or off == 0.0:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = W[p * m + q]
                if apq == 0.0:
                    continue
                app = W[p * m + p]
                aqq = W[q * m + q]
                theta = (aqq - app) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + sqrt(1.0 + theta * theta))
                cs = 1.0 / sqrt(1.0 + t * t)
                sn = t * cs
                for k in range(m):
                    akp = W[k * m + p]
                    akq = W[k * m + q]
                    W[k * m + p] = cs * akp - sn * akq
                    W[k * m + q] = sn * akp + cs * akq
                for k in range(m):
                    akp = W[p * m + k]
                    akq = W[q * m + k]
                    W[p * m + k] = cs * akp - sn * akq
                    W[q * m + k] = sn * akp + cs * akq
    r = W[0]
    for p in range(1, m):
        if W[p * m + p] < r:
            r = W[p * m + p]
    return r


cdef double _max_step(const double* Li, const double* D, int m, double* t1, double* t2) noexcept nogil:
    """Largest alpha keeping S + alpha*D PSD, with Li = inverse Cholesky factor of S."""
    cdef int i, j, k
    cdef double s, lmin
    _matmul(Li, D, t1, m)
    for i in range(m):
        for j in range(m):
            s = 0.0
            for k in range(m):
                s += t1[i * m + k] * Li[j * m + k]
            t2[i * m + j] = s
    for i in range(m):
        for j in range(i + 1, m):
            s = 0.5 * (t2[i * m + j] + t2[j * m + i])
            t2[i * m + j] = s
            t2[j * m + i] = s
    lmin = _min_eig(t2, m)
    if lmin >= 0.0:
        return INFINITY
    return -1.0 / lmin


cdef int _lu_solve(double* A, double* r, int n) noexcept nogil:
    """Solve A x = r in place with partial pivoting (A destroyed); -1 if singular."""
    cdef int i, j, k, piv
    cdef double t, big
    for k in range(n):
        piv = k
        big = fabs(A[k * n + k])
        for i in range(k + 1, n):
            if fabs(A[i * n + k]) > big:
                big = fabs(A[i * n + k])
                piv = i
        if big == 0.0:
            return -1
        if piv != k:
            for j in range(n):
                t = A[k * n + j]
                A[k * n + j] = A[piv * n + j]
                A[piv * n + j] = t
            t = r[k]
            r[k] = r[piv]
            r[piv] = t
        for i in range(k + 1, n):
            t = A[i * n + k] / A[k * n + k]
            for j in range(k, n):
                A[i * n + j] -= t * A[k * n + j]
            r[i] -= t * r[k]
    for i in range(n - 1, -1, -1):
        t = r[i]
        for j in range(i + 1, n):
            t -= A[i * n + j] * r[j]
        r[i] = t / A[i * n + i]
    return 0


# ---------------------------------------------------------------- SDP operators

cdef void _fmap(Prob* P, const double* x, double* out) noexcept nogil:
    cdef int k, t
    cdef int L = P.L
    cdef double xk
    memset(out, 0, L * sizeof(double))
    for k in range(P.nv):
        xk = x[k]
        if xk != 0.0:
            for t in range(L):
                out[t] += xk * P.F[k * L + t]


cdef void _fstar(Prob* P, const double* Ms, double* out) noexcept nogil:
    cdef int k
    for k in range(P.nv):
        out[k] = _dot(P.F + k * P.L, Ms, P.L)




# ---------------------------------------------------------------- workspace

cdef struct Work:
    double* v
    double* lam
    double* S
    double* Z
    double* Fv
    double* fz
    double* atl
    double* rx
    double* ry
    double* rz
    double* Ls
    double* Lz
    double* Lsi
    double* Lzi
    double* Sinv
    double* M
    double* LM
    double* K
    double* LK
    double* MAt
    double* regtmp
    double* S0Z
    double* u
    double* SrZ
    double* fSrZ
    double* p2v
    double* p2l
    double* p1v
    double* p1l
    double* Fd
    double* w
    double* kr1
    double rho
    double* r1
    double* r2
    double* dv
    double* dl
    double* dS
    double* dZ
    double* dSa
    double* dZa
    double* Rc
    double* t1
    double* t2
    double* t3


cdef double* _work_alloc(Prob* P, Work* W) noexcept nogil:
    cdef int nv = P.nv
    cdef int me = P.me
    cdef int L = P.L
    cdef int mm = 0
    cdef int j
    cdef size_t total
    cdef double* base
    cdef double* p
    for j in range(P.nb):
        if P.m[j] * P.m[j] > mm:
            mm = P.m[j] * P.m[j]
    total = (<size_t> 20) * L + 14 * nv + 7 * me + 2 * nv * nv + 2 * me * me \
        + nv * me + (nv * nv if nv * nv > me * me else me * me) + 3 * mm + 8
    base = <double*> malloc(total * sizeof(double))
    if base == NULL:
        return NULL
    memset(base, 0, total * sizeof(double))
    p = base
    W.v = p; p += nv
    W.lam = p; p += me
    W.S = p; p += L
    W.Z = p; p += L
    W.Fv = p; p += L
    W.fz = p; p += nv
    W.atl = p; p += nv
    W.rx = p; p += nv
    W.ry = p; p += me
    W.rz = p; p += L
    W.Ls = p; p += L
    W.Lz = p; p += L
    W.Lsi = p; p += L
    W.Lzi = p; p += L
    W.Sinv = p; p += L
    W.M = p; p += nv * nv
    W.LM = p; p += nv * nv
    W.K = p; p += me * me
    W.LK = p; p += me * me
    W.MAt = p; p += nv * me
    W.regtmp = p; p += (nv * nv if nv * nv > me * me else me * me)
    W.S0Z = p; p += L
    W.u = p; p += nv
    W.SrZ = p; p += L
    W.fSrZ = p; p += nv
    W.p2v = p; p += nv
    W.p2l = p; p += me
    W.p1v = p; p += nv
    W.p1l = p; p += me
    W.Fd = p; p += L
    W.w = p; p += nv
    W.kr1 = p; p += nv
    W.r1 = p; p += nv
    W.r2 = p; p += me
    W.dv = p; p += nv
    W.dl = p; p += me
    W.dS = p; p += L
    W.dZ = p; p += L
    W.dSa = p; p += L
    W.dZa = p; p += L
    W.Rc = p; p += L
    W.t1 = p; p += mm
    W.t2 = p; p += mm
    W.t3 = p; p += mm
    return base


cdef void _sandwich(const double* X, const double* Y, const double* Zm, double* out,
                    double* tmp, int m) noexcept nogil:
    """out = X @ Y @ Zm"""
    _matmul(X, Y, tmp, m)
    _matmul(tmp, Zm, out, m)


# ---------------------------------------------------------------- IPM core

cdef void _kkt(Prob* P, Work* W, const double* r1, const double* r2,
               double* outv, double* outl) noexcept nogil:
    cdef int nv = P.nv
    cdef int me = P.me
    cdef int i, k
    cdef double s
    # M was augmented by rho*A^T A, so the rhs gains rho*A^T r2
    for k in range(nv):
        s = r1[k]
        for i in range(me):
            s += W.rho * P.A[i * nv + k] * r2[i]
        W.kr1[k] = s
    r1 = W.kr1
    memcpy(outv, r1, nv * sizeof(double))
    _chol_solve(W.LM, outv, nv)
    if me:
        for i in range(me):
            outl[i] = r2[i] - _dot(P.A + i * nv, outv, nv)
        _chol_solve(W.LK, outl, me)
        for k in range(nv):
            s = r1[k]
            for i in range(me):
                s += P.A[i * nv + k] * outl[i]
            outv[k] = s
        _chol_solve(W.LM, outv, nv)


cdef int _direction(Prob* P, Work* W, const double* Rc, double eta, double corr,
                    double sm, double tau, double kappa, double rt, double t0SrZ,
                    double den, double* dtau_out, double* dkappa_out) noexcept nogil:
    cdef int nv = P.nv
    cdef int me = P.me
    cdef int L = P.L
    cdef int j, k, i, a, bb, mj, o
    cdef double e1 = 1.0 - eta
    cdef double rho, q, r3, num, dtau, s
    _fstar(P, Rc, W.w)
    for k in range(nv):
        W.w[k] += e1 * W.fSrZ[k]
    rho = _dot(P.F0, Rc, L) + e1 * t0SrZ
    q = sm - tau * kappa - corr
    for k in range(nv):
        W.r1[k] = -e1 * W.rx[k] + W.w[k]
    for i in range(me):
        W.r2[i] = e1 * W.ry[i]
    _kkt(P, W, W.r1, W.r2, W.p1v, W.p1l)
    r3 = -e1 * rt - rho - q / tau
    num = r3
    for k in range(nv):
        num -= (P.c[k] - W.u[k]) * W.p1v[k]
    for i in range(me):
        num += P.b[i] * W.p1l[i]
    dtau = num / den
    if not isfinite(dtau):
        return -1
    for k in range(nv):
        W.dv[k] = W.p1v[k] - dtau * W.p2v[k]
        if not isfinite(W.dv[k]):
            return -1
    for i in range(me):
        W.dl[i] = W.p1l[i] - dtau * W.p2l[i]
    _fmap(P, W.dv, W.dS)
    for k in range(L):
        W.dS[k] += dtau * P.F0[k] - e1 * W.rz[k]
    for j in range(P.nb):
        mj = P.m[j]
        o = P.off[j]
        _sandwich(W.Sinv + o, W.dS + o, W.Z + o, W.t2, W.t1, mj)
        for a in range(mj):
            for bb in range(mj):
                W.t3[a * mj + bb] = Rc[o + a * mj + bb] - W.t2[a * mj + bb]
        for a in range(mj):
            for bb in range(mj):
                W.dZ[o + a * mj + bb] = 0.5 * (W.t3[a * mj + bb] + W.t3[bb * mj + a])
    dtau_out[0] = dtau
    dkappa_out[0] = (q - kappa * dtau) / tau
    return 0


cdef double _max_alpha(Prob* P, Work* W, double tau, double kappa, double dtau,
                       double dkappa) noexcept nogil:
    cdef double a = INFINITY
    cdef double t
    cdef int j, o, mj
    for j in range(P.nb):
        mj = P.m[j]
        o = P.off[j]
        t = _max_step(W.Lsi + o, W.dS + o, mj, W.t1, W.t2)
        if t < a:
            a = t
    for j in range(P.nb):
        mj = P.m[j]
        o = P.off[j]
        t = _max_step(W.Lzi + o, W.dZ + o, mj, W.t1, W.t2)
        if t < a:
            a = t
    if dtau < 0.0 and -tau / dtau < a:
        a = -tau / dtau
    if dkappa < 0.0 and -kappa / dkappa < a:
        a = -kappa / dkappa
    return a


cdef void _snapshot(Prob* P, Work* W, Result* R, double tau, double pobj, double dobj,
                    double pres, double dres, double gap) noexcept nogil:
    cdef int k
    for k in range(P.nv):
        R.v[k] = W.v[k] / tau
    for k in range(P.me):
        R.lam[k] = W.lam[k] / tau
    for k in range(P.L):
        R.S[k] = W.S[k] / tau
        R.Z[k] = W.Z[k] / tau
    R.pobj = pobj
    R.dobj = dobj
    R.pres = pres
    R.dres = dres
    R.gap = gap
    R.dres_abs = (_amax(W.rx, P.nv) if P.nv else 0.0) / tau


cdef int _ipm(Prob* P, Result* R, double feas_tol, double gap_tol, int max_iters,
              double step_frac, double infeas_tol) noexcept nogil:
    """Homogeneous self-dual HKM predictor-corrector; see the numpy twin."""
    cdef Work W
    cdef double* base = _work_alloc(P, &W)
    cdef int nv = P.nv
    cdef int me = P.me
    cdef int L = P.L
    cdef int N = 0
    cdef int j, k, i, a, bb, mj, o, it, last_progress, status, have_best, terminal, tries, bad
    cdef double scale, tau, kappa, dnorm_p, dnorm_d, cv, bl, rt, trsz, mu, pobj, dobj
    cdef double pnorm, dnorm, pres, dres, gap, rel, merit, ray_p, progress, best_progress
    cdef double best_merit, ray, t, s, den, t0SrZ, dtau, dkappa, a_aff, sigma, alpha
    cdef double dtau_a, dkappa_a, mu_new, dm, da
    if base == NULL:
        return -1

    scale = 1.0
    scale = _fmax(scale, _amax(P.c, nv))
    scale = _fmax(scale, _amax(P.A, me * nv))
    scale = _fmax(scale, _amax(P.b, me))
    scale = _fmax(scale, _amax(P.F0, L))
    scale = _fmax(scale, _amax(P.F, nv * L))
    for j in range(P.nb):
        mj = P.m[j]
        o = P.off[j]
        N += mj
        for a in range(mj):
            W.S[o + a * mj + a] = scale
            W.Z[o + a * mj + a] = scale
    tau = 1.0
    kappa = scale * scale
    dnorm_p = _amax(P.b, me)
    t = _amax(P.F0, L)
    if t > dnorm_p:
        dnorm_p = t
    dnorm_d = _amax(P.c, nv)

    R.mu_len = 0
    status = ST_MAX_ITERATIONS
    it = 0
    have_best = 0
    best_merit = INFINITY
    last_progress = 0
    best_progress = INFINITY

    while True:
        _fmap(P, W.v, W.Fv)
        _fstar(P, W.Z, W.fz)
        for k in range(nv):
            s = 0.0
            for i in range(me):
                s += P.A[i * nv + k] * W.lam[i]
            W.atl[k] = s
            W.rx[k] = -s - W.fz[k] + P.c[k] * tau
        for i in range(me):
            W.ry[i] = -_dot(P.A + i * nv, W.v, nv) + P.b[i] * tau
        for k in range(L):
            W.rz[k] = W.S[k] - W.Fv[k] - tau * P.F0[k]
        cv = _dot(P.c, W.v, nv)
        bl = _dot(P.b, W.lam, me) - _dot(P.F0, W.Z, L)
        rt = kappa + cv - bl
        trsz = _dot(W.S, W.Z, L)
        mu = (trsz + tau * kappa) / (N + 1)
        if R.mu_hist != NULL and R.mu_len < R.mu_cap:
            R.mu_hist[R.mu_len] = mu
            R.mu_len += 1

        pobj = cv / tau
        dobj = bl / tau
        pnorm = dnorm_p
        t = _amax(W.S, L) / tau
        if t > pnorm:
            pnorm = t
        dnorm = dnorm_d
        if nv:
            t = _amax(W.fz, nv) / tau
            if t > dnorm:
                dnorm = t
        if me:
            t = _amax(W.atl, nv) / tau
            if t > dnorm:
                dnorm = t
        pres = _amax(W.ry, me)
        t = _amax(W.rz, L)
        if t > pres:
            pres = t
        pres = pres / tau / (1.0 + pnorm)
        dres = (_amax(W.rx, nv) if nv else 0.0) / tau / (1.0 + dnorm)
        gap = trsz / (tau * tau)
        rel = 1.0
        if fabs(pobj) > rel:
            rel = fabs(pobj)
        if fabs(dobj) > rel:
            rel = fabs(dobj)
        merit = pres
        if dres > merit:
            merit = dres
        if gap / rel > merit:
            merit = gap / rel
        ray_p = INFINITY
        if bl > 0.0:
            s = 0.0
            for k in range(nv):
                t = fabs(W.atl[k] + W.fz[k])
                if t > s:
                    s = t
            ray_p = s / bl
        progress = merit if merit < ray_p else ray_p
        if progress < 0.5 * best_progress:
            best_progress = progress
            last_progress = it

        terminal = 0
        if pres <= feas_tol and dres <= feas_tol and gap <= gap_tol * rel:
            status = ST_OPTIMAL
            terminal = 1
        elif ray_p <= infeas_tol:
            status = ST_INFEASIBLE
            terminal = 1
        elif cv < 0.0:
            ray = 0.0
            for i in range(me):
                t = fabs(_dot(P.A + i * nv, W.v, nv))
                if t > ray:
                    ray = t
            for k in range(L):
                t = fabs(W.Fv[k] - W.S[k])
                if t > ray:
                    ray = t
            if ray <= infeas_tol * -cv:
                status = ST_UNBOUNDED
                terminal = 1
        if terminal or not have_best or merit <= best_merit:
            best_merit = merit
            have_best = 1
            _snapshot(P, &W, R, tau, pobj, dobj, pres, dres, gap)
        if terminal:
            break
        if it >= max_iters:
            status = ST_MAX_ITERATIONS
            break
        if it - last_progress >= STALL_ITERS:
            status = ST_NUMERICAL_FAILURE
            break

        # factorizations
        bad = 0
        for j in range(P.nb):
            mj = P.m[j]
            o = P.off[j]
            if _chol(W.S + o, W.Ls + o, mj) != 0 or _chol(W.Z + o, W.Lz + o, mj) != 0:
                bad = 1
                break
            _inv_lower(W.Ls + o, W.Lsi + o, mj)
            _inv_lower(W.Lz + o, W.Lzi + o, mj)
            for a in range(mj):
                for bb in range(mj):
                    s = 0.0
                    for i in range(mj):
                        s += W.Lsi[o + i * mj + a] * W.Lsi[o + i * mj + bb]
                    W.Sinv[o + a * mj + bb] = s
        if bad:
            status = ST_NUMERICAL_FAILURE
            break

        # Schur matrix M_kl = sum_j Tr(F_jk Sinv_j F_jl Z_j)
        memset(W.M, 0, nv * nv * sizeof(double))
        for j in range(P.nb):
            mj = P.m[j]
            o = P.off[j]
            for k in range(nv):
                _sandwich(W.Sinv + o, P.F + k * L + o, W.Z + o, W.t2, W.t1, mj)
                for i in range(nv):
                    W.M[i * nv + k] += _dot(P.F + i * L + o, W.t2, mj * mj)
        for k in range(nv):
            for i in range(k + 1, nv):
                s = 0.5 * (W.M[k * nv + i] + W.M[i * nv + k])
                W.M[k * nv + i] = s
                W.M[i * nv + k] = s
        # M is singular when F has a null space; adding rho*A^T A keeps the
        # KKT solution and restores definiteness if null(F) and null(A) meet only at 0
        W.rho = 0.0
        if me:
            dm = 1e-300
            da = 1e-300
            for k in range(nv):
                if W.M[k * nv + k] > dm:
                    dm = W.M[k * nv + k]
                s = 0.0
                for i in range(me):
                    s += P.A[i * nv + k] * P.A[i * nv + k]
                if s > da:
                    da = s
            W.rho = dm / da
            for k in range(nv):
                for a in range(nv):
                    s = 0.0
                    for i in range(me):
                        s += P.A[i * nv + k] * P.A[i * nv + a]
                    W.M[k * nv + a] += W.rho * s
        if _chol_reg(W.M, W.LM, nv, W.regtmp) != 0:
            status = ST_NUMERICAL_FAILURE
            break
        if me:
            for i in range(me):
                memcpy(W.MAt + i * nv, P.A + i * nv, nv * sizeof(double))
                _chol_solve(W.LM, W.MAt + i * nv, nv)
            for i in range(me):
                for a in range(me):
                    W.K[i * me + a] = _dot(P.A + i * nv, W.MAt + a * nv, nv)
            if _chol_reg(W.K, W.LK, me, W.regtmp) != 0:
                status = ST_NUMERICAL_FAILURE
                break

        for j in range(P.nb):
            mj = P.m[j]
            o = P.off[j]
            _sandwich(W.Sinv + o, P.F0 + o, W.Z + o, W.S0Z + o, W.t1, mj)
            _sandwich(W.Sinv + o, W.rz + o, W.Z + o, W.SrZ + o, W.t1, mj)
        _fstar(P, W.S0Z, W.u)
        _fstar(P, W.SrZ, W.fSrZ)
        t0SrZ = _dot(P.F0, W.SrZ, L)

        for k in range(nv):
            W.r1[k] = P.c[k] + W.u[k]
        for i in range(me):
            W.r2[i] = -P.b[i]
        _kkt(P, &W, W.r1, W.r2, W.p2v, W.p2l)
        # den = -(||F(p2v) - F0||_W^2 + kappa/tau), a sum of squares
        den = -kappa / tau
        _fmap(P, W.p2v, W.Fd)
        for j in range(P.nb):
            mj = P.m[j]
            o = P.off[j]
            for k in range(mj * mj):
                W.t3[k] = W.Fd[o + k] - P.F0[o + k]
            _sandwich(W.Lsi + o, W.t3, W.Lz + o, W.t2, W.t1, mj)
            den -= _dot(W.t2, W.t2, mj * mj)

        # predictor
        for k in range(L):
            W.Rc[k] = -W.Z[k]
        if _direction(P, &W, W.Rc, 0.0, 0.0, 0.0, tau, kappa, rt, t0SrZ, den,
                      &dtau, &dkappa) != 0:
            status = ST_NUMERICAL_FAILURE
            break
        a_aff = _max_alpha(P, &W, tau, kappa, dtau, dkappa)
        if a_aff > 1.0:
            a_aff = 1.0
        sigma = (1.0 - a_aff) * (1.0 - a_aff) * (1.0 - a_aff)
        memcpy(W.dSa, W.dS, L * sizeof(double))
        memcpy(W.dZa, W.dZ, L * sizeof(double))
        dtau_a = dtau
        dkappa_a = dkappa

        # corrector
        for j in range(P.nb):
            mj = P.m[j]
            o = P.off[j]
            _sandwich(W.Sinv + o, W.dSa + o, W.dZa + o, W.t2, W.t1, mj)
            for k in range(mj * mj):
                W.Rc[o + k] = sigma * mu * W.Sinv[o + k] - W.Z[o + k] - W.t2[k]
        if _direction(P, &W, W.Rc, sigma, dtau_a * dkappa_a, sigma * mu, tau, kappa,
                      rt, t0SrZ, den, &dtau, &dkappa) != 0:
            status = ST_NUMERICAL_FAILURE
            break
        alpha = step_frac * _max_alpha(P, &W, tau, kappa, dtau, dkappa)
        if alpha > 1.0:
            alpha = 1.0
        for tries in range(30):
            s = 0.0
            for k in range(L):
                s += (W.S[k] + alpha * W.dS[k]) * (W.Z[k] + alpha * W.dZ[k])
            mu_new = (s + (tau + alpha * dtau) * (kappa + alpha * dkappa)) / (N + 1)
            if mu_new <= 1.01 * mu:
                break
            alpha *= 0.5

        for k in range(nv):
            W.v[k] += alpha * W.dv[k]
        for i in range(me):
            W.lam[i] += alpha * W.dl[i]
        for k in range(L):
            W.S[k] += alpha * W.dS[k]
            W.Z[k] += alpha * W.dZ[k]
        tau += alpha * dtau
        kappa += alpha * dkappa
        it += 1

    R.status = status
    R.iters = it
    free(base)
    return 0


# ---------------------------------------------------------------- cubic SDP

cdef struct Cubic:
    Prob P
    int mbuf[2]
    int obuf[2]
    double* base


cdef int _cubic_alloc(int n, Cubic* C) noexcept nogil:
    cdef int m = n + 1
    cdef int nv = n + 1 + n * (n + 1) // 2
    cdef int L = 2 * m * m
    cdef double* p
    C.base = <double*> malloc((nv + n * nv + n + L + nv * L + 1) * sizeof(double))
    if C.base == NULL:
        return -1
    p = C.base
    C.P.nv = nv
    C.P.me = n
    C.P.nb = 2
    C.P.L = L
    C.mbuf[0] = m
    C.mbuf[1] = m
    C.obuf[0] = 0
    C.obuf[1] = m * m
    C.P.m = C.mbuf
    C.P.off = C.obuf
    C.P.c = p; p += nv
    C.P.A = p; p += n * nv
    C.P.b = p; p += n
    C.P.F0 = p; p += L
    C.P.F = p
    return 0


cdef void _cubic_fill(int n, const double* H, const double* Q, const double* bv,
                      double sc, double k, Cubic* C) noexcept nogil:
    """Arrays for the model in z = x / sc, with all data divided by k."""
    cdef Prob* P = &C.P
    cdef int m = n + 1
    cdef int mm = m * m
    cdef int nv = P.nv
    cdef int L = P.L
    cdef int a, bb, l, i, t, kk
    cdef double h3 = sc * sc * sc / k
    cdef double q2 = sc * sc / k
    cdef double b1 = sc / k
    cdef double* pc = C.base
    cdef double* pA = pc + nv
    cdef double* pb = pA + n * nv
    cdef double* pF0 = pb + n
    cdef double* pF = pF0 + L
    memset(pc, 0, (nv + n * nv + n + L + nv * L) * sizeof(double))
    # variables: x (n), y, upper triangle of X row by row
    for a in range(n):
        pc[a] = b1 * bv[a]
        pb[a] = -b1 * bv[a]
        for l in range(n):
            pA[a * nv + l] = q2 * Q[a * n + l]
    pc[n] = 0.5
    for a in range(n):
        for bb in range(n):
            pF0[a * m + bb] = q2 * Q[a * n + bb]
    pF0[mm + n * m + n] = 1.0
    for l in range(n):
        for a in range(n):
            for bb in range(n):
                pF[l * L + a * m + bb] = h3 * H[l * n * n + a * n + bb]
            pF[l * L + a * m + n] = q2 * Q[a * n + l]
            pF[l * L + n * m + a] = q2 * Q[a * n + l]
        pF[l * L + mm + l * m + n] = 1.0
        pF[l * L + mm + n * m + l] = 1.0
    pF[n * L + n * m + n] = 1.0
    t = 0
    for a in range(n):
        for bb in range(a, n):
            kk = n + 1 + t
            if a == bb:
                pc[kk] = 0.5 * q2 * Q[a * n + a]
                for i in range(n):
                    pA[i * nv + kk] = 0.5 * h3 * H[i * n * n + a * n + a]
                    pF[kk * L + i * m + n] = h3 * H[i * n * n + a * n + a]
                    pF[kk * L + n * m + i] = h3 * H[i * n * n + a * n + a]
                pF[kk * L + mm + a * m + a] = 1.0
            else:
                pc[kk] = q2 * Q[a * n + bb]
                for i in range(n):
                    pA[i * nv + kk] = h3 * H[i * n * n + a * n + bb]
                    pF[kk * L + i * m + n] = 2.0 * h3 * H[i * n * n + a * n + bb]
                    pF[kk * L + n * m + i] = 2.0 * h3 * H[i * n * n + a * n + bb]
                pF[kk * L + mm + a * m + bb] = 1.0
                pF[kk * L + mm + bb * m + a] = 1.0
            t += 1


cdef struct SolveOut:
    Result R
    double* base


cdef int _result_alloc(Prob* P, SolveOut* O) noexcept nogil:
    O.base = <double*> malloc((P.nv + P.me + 2 * P.L + 1) * sizeof(double))
    if O.base == NULL:
        return -1
    O.R.v = O.base
    O.R.lam = O.base + P.nv
    O.R.S = O.base + P.nv + P.me
    O.R.Z = O.base + P.nv + P.me + P.L
    O.R.mu_hist = NULL
    O.R.mu_cap = 0
    O.R.mu_len = 0
    return 0


cdef double _data_scale(int n, const double* H, const double* Q, const double* bv,
                        double sc) noexcept nogil:
    cdef double k = 0.0
    cdef double t
    t = _amax(H, n * n * n) * sc * sc * sc
    if t > k:
        k = t
    t = _amax(Q, n * n) * sc * sc
    if t > k:
        k = t
    t = _amax(bv, n) * sc
    if t > k:
        k = t
    if not k > 0.0:
        k = 1.0
    return k


cdef void _model_grad_hess(int n, const double* H, const double* Q, const double* bv,
                           const double* x, double* g, double* Hm) noexcept nogil:
    cdef int i, a, bb
    cdef double s
    for a in range(n):
        for bb in range(n):
            s = Q[a * n + bb]
            for i in range(n):
                s += x[i] * H[i * n * n + a * n + bb]
            Hm[a * n + bb] = s
    for a in range(n):
        s = bv[a]
        for bb in range(n):
            s += (0.5 * (Hm[a * n + bb] - Q[a * n + bb]) + Q[a * n + bb]) * x[bb]
        g[a] = s


cdef double _norm2(const double* x, int n) noexcept nogil:
    return sqrt(_dot(x, x, n))


cdef int _local_min_c(int n, const double* H, const double* Q, const double* bv,
                      double phi_tol, double grad_tol, double psd_strict_tol,
                      int polish_steps, double feas_tol, double gap_tol, int max_iters,
                      int iterate_as_sop, double* x, double* phi_out, double* gn_out, double* lmin_out,
                      int* st_out, int* iters_out) noexcept nogil:
    """Per-model classification; returns the outcome code (or -1 on malloc failure)."""
    cdef Cubic C
    cdef SolveOut O1, O2
    cdef SolveOut* cur
    cdef int st, st2, iters, i, unclear, finite, step, outcome, rc
    cdef double k, s, phi, bound, gn, gnn, lmin
    cdef double* buf
    cdef double* g
    cdef double* Hm
    cdef double* xn
    cdef double* gnew
    cdef double* Hnew
    cdef double* LUa
    rc = -1
    if _cubic_alloc(n, &C) != 0:
        return -1
    O1.base = NULL
    O2.base = NULL
    buf = <double*> malloc((6 * n * n + 6 * n + 1) * sizeof(double))
    if buf != NULL and _result_alloc(&C.P, &O1) == 0 and _result_alloc(&C.P, &O2) == 0:
        g = buf
        Hm = buf + n
        xn = Hm + n * n
        gnew = xn + n
        Hnew = gnew + n
        LUa = Hnew + n * n

        k = _data_scale(n, H, Q, bv, 1.0)
        _cubic_fill(n, H, Q, bv, 1.0, k, &C)
        if _ipm(&C.P, &O1.R, feas_tol, gap_tol, max_iters, 0.98, 1e-8) == 0:
            cur = &O1
            st = O1.R.status
            iters = O1.R.iters
            for i in range(n):
                x[i] = O1.R.v[i]
            phi = O1.R.pobj
            unclear = (st == ST_MAX_ITERATIONS or st == ST_NUMERICAL_FAILURE
                       or (st == ST_OPTIMAL and phi > phi_tol))
            finite = 1
            for i in range(n):
                if not isfinite(x[i]):
                    finite = 0
            if unclear and finite:
                s = _amax(x, n)
                if s > RESCALE_THRESHOLD:
                    # re-solve in z = x / s; a far-away point makes the blocks ill-conditioned
                    k = _data_scale(n, H, Q, bv, s)
                    _cubic_fill(n, H, Q, bv, s, k, &C)
                    if _ipm(&C.P, &O2.R, feas_tol, gap_tol, max_iters, 0.98, 1e-8) == 0:
                        st2 = O2.R.status
                        iters += O2.R.iters
                        if (st2 == ST_OPTIMAL or st2 == ST_INFEASIBLE
                                or st2 == ST_UNBOUNDED or st != ST_OPTIMAL):
                            st = st2
                            for i in range(n):
                                x[i] = s * O2.R.v[i]
                            phi = O2.R.pobj
                            cur = &O2
            st_out[0] = st
            iters_out[0] = iters
            phi_out[0] = phi
            gn_out[0] = NAN
            lmin_out[0] = NAN
            rc = 0
            s = 0.0
            for i in range(C.P.nv):
                s += fabs(cur.R.v[i])
            bound = cur.R.dobj - cur.R.dres_abs * s
            if ((st == ST_MAX_ITERATIONS or st == ST_NUMERICAL_FAILURE)
                    and cur.R.dres <= DUAL_CERT_TOL and bound > DUAL_CERT_MIN):
                # a nearly feasible dual point bounds phi from below
                phi_out[0] = cur.R.dobj
                outcome = OC_NO_SECOND_ORDER_POINT
            elif st == ST_INFEASIBLE or st == ST_UNBOUNDED:
                # phi is nonnegative on the feasible set, so an improving ray
                # means the primal is empty as well
                phi_out[0] = INFINITY
                outcome = OC_NO_SECOND_ORDER_POINT
            elif st != ST_OPTIMAL:
                outcome = OC_SOLVER_FAILED
            elif phi > phi_tol and not iterate_as_sop:
                outcome = OC_NO_SECOND_ORDER_POINT
            elif phi > phi_tol:
                # solved SDP without a second-order point: report its x unpolished
                _model_grad_hess(n, H, Q, bv, x, g, Hm)
                gn_out[0] = _norm2(g, n)
                for i in range(n):
                    for step in range(n):
                        LUa[i * n + step] = 0.5 * (Hm[i * n + step] + Hm[step * n + i])
                lmin_out[0] = _min_eig(LUa, n)
                outcome = OC_SECOND_ORDER_POINT
            else:
                _model_grad_hess(n, H, Q, bv, x, g, Hm)
                gn = _norm2(g, n)
                for step in range(polish_steps):
                    memcpy(LUa, Hm, n * n * sizeof(double))
                    memcpy(xn, g, n * sizeof(double))
                    if _lu_solve(LUa, xn, n) != 0:
                        break
                    for i in range(n):
                        xn[i] = x[i] - xn[i]
                    _model_grad_hess(n, H, Q, bv, xn, gnew, Hnew)
                    gnn = _norm2(gnew, n)
                    if not gnn < gn:
                        break
                    memcpy(x, xn, n * sizeof(double))
                    memcpy(g, gnew, n * sizeof(double))
                    memcpy(Hm, Hnew, n * n * sizeof(double))
                    gn = gnn
                for i in range(n):
                    for step in range(n):
                        LUa[i * n + step] = 0.5 * (Hm[i * n + step] + Hm[step * n + i])
                lmin = _min_eig(LUa, n)
                gn_out[0] = gn
                lmin_out[0] = lmin
                if gn <= grad_tol and lmin >= psd_strict_tol:
                    outcome = OC_LOCAL_MIN
                else:
                    outcome = OC_SECOND_ORDER_POINT
            if outcome == OC_NO_SECOND_ORDER_POINT or outcome == OC_SOLVER_FAILED:
                for i in range(n):
                    x[i] = NAN
            rc = outcome
    free(C.base)
    if buf != NULL:
        free(buf)
    if O1.base != NULL:
        free(O1.base)
    if O2.base != NULL:
        free(O2.base)
    return rc


# ---------------------------------------------------------------- Python API

def ipm_solve(c, A, b, block_sizes, F0, F, double feas_tol=1e-8, double gap_tol=1e-8,
              int max_iters=100, double step_frac=0.98, double infeas_tol=1e-8):
    """Homogeneous self-dual primal-dual path following (compiled).

    Same arguments and returned dict as the numpy backend.
    """
    cdef const double[::1] c_ = np.ascontiguousarray(c, dtype=np.float64).ravel()
    cdef int nv = c_.shape[0]
    cdef const double[::1] b_ = np.ascontiguousarray(b, dtype=np.float64).ravel()
    cdef int me = b_.shape[0]
    cdef const double[::1] A_ = np.ascontiguousarray(A, dtype=np.float64).reshape(-1)
    cdef const double[::1] F0_ = np.ascontiguousarray(F0, dtype=np.float64).ravel()
    cdef int L = F0_.shape[0]
    cdef const double[::1] F_ = np.ascontiguousarray(F, dtype=np.float64).reshape(-1)
    sizes = np.ascontiguousarray(block_sizes, dtype=np.intc).ravel()
    cdef const int[::1] m_ = sizes
    offs = np.zeros(len(sizes), dtype=np.intc)
    if len(sizes) > 1:
        offs[1:] = np.cumsum(sizes[:len(sizes) - 1].astype(np.int64) ** 2)
    cdef int[::1] o_ = offs
    if A_.shape[0] != me * nv or F_.shape[0] != nv * L or int(np.sum(sizes.astype(np.int64) ** 2)) != L:
        raise ValueError("inconsistent problem dimensions")
    v = np.zeros(nv)
    lam = np.zeros(me)
    S = np.zeros(L)
    Z = np.zeros(L)
    mu = np.zeros(max_iters + 2)
    cdef double[::1] v_ = v
    cdef double[::1] lam_ = lam
    cdef double[::1] S_ = S
    cdef double[::1] Z_ = Z
    cdef double[::1] mu_ = mu
    cdef double dummy = 0.0
    cdef Prob P
    cdef Result R
    P.nv = nv
    P.me = me
    P.nb = m_.shape[0]
    P.L = L
    P.m = &m_[0] if m_.shape[0] else NULL
    P.off = &o_[0] if o_.shape[0] else NULL
    P.c = &c_[0] if nv else &dummy
    P.A = &A_[0] if A_.shape[0] else &dummy
    P.b = &b_[0] if me else &dummy
    P.F0 = &F0_[0] if L else &dummy
    P.F = &F_[0] if F_.shape[0] else &dummy
    R.v = &v_[0] if nv else &dummy
    R.lam = &lam_[0] if me else &dummy
    R.S = &S_[0] if L else &dummy
    R.Z = &Z_[0] if L else &dummy
    R.mu_hist = &mu_[0]
    R.mu_cap = mu_.shape[0]
    R.mu_len = 0
    cdef int rc
    with nogil:
        rc = _ipm(&P, &R, feas_tol, gap_tol, max_iters, step_frac, infeas_tol)
    if rc != 0:
        raise MemoryError
    return dict(v=v, lam=lam, S=S, Z=Z, pobj=R.pobj, dobj=R.dobj, pres=R.pres,
                dres=R.dres, gap=R.gap, dres_abs=R.dres_abs, status=R.status,
                iterations=R.iters, mu_history=mu[:R.mu_len].copy())


def cubic_sdp_arrays(H, Q, b):
    """Canonical arrays of the local-minimum SDP for one cubic model (compiled)."""
    cdef const double[::1] H_ = np.ascontiguousarray(H, dtype=np.float64).ravel()
    cdef const double[::1] Q_ = np.ascontiguousarray(Q, dtype=np.float64).ravel()
    cdef const double[::1] b_ = np.ascontiguousarray(b, dtype=np.float64).ravel()
    cdef int n = b_.shape[0]
    cdef Cubic C
    if n < 1:
        raise ValueError("empty model")
    if _cubic_alloc(n, &C) != 0:
        raise MemoryError
    _cubic_fill(n, &H_[0], &Q_[0], &b_[0], 1.0, 1.0, &C)
    nv, L = C.P.nv, C.P.L
    c = np.asarray(<double[:nv]> C.P.c).copy()
    A = np.asarray(<double[:n * nv]> C.P.A).copy().reshape(n, nv)
    beq = np.asarray(<double[:n]> C.P.b).copy()
    F0 = np.asarray(<double[:L]> C.P.F0).copy()
    F = np.asarray(<double[:nv * L]> C.P.F).copy().reshape(nv, L)
    free(C.base)
    return c, A, beq, np.array([n + 1, n + 1], dtype=np.intc), F0, F


def local_min(H, Q, b, double phi_tol=1e-6, double grad_tol=1e-6, double psd_tol=1e-7,
              double psd_strict_tol=1e-7, int polish_steps=3, double feas_tol=1e-8,
              double gap_tol=1e-8, int max_iters=100, bint iterate_as_sop=True):
    """Solve the SDP for one model and classify the extracted point (compiled).

    Returns ``(outcome, x, phi, grad_norm, min_eig, solver_status, iters)``.
    """
    cdef const double[::1] H_ = np.ascontiguousarray(H, dtype=np.float64).ravel()
    cdef const double[::1] Q_ = np.ascontiguousarray(Q, dtype=np.float64).ravel()
    cdef const double[::1] b_ = np.ascontiguousarray(b, dtype=np.float64).ravel()
    cdef int n = b_.shape[0]
    if n < 1:
        raise ValueError("empty model")
    x = np.zeros(n)
    cdef double[::1] x_ = x
    cdef double phi = 0.0, gn = 0.0, lmin = 0.0
    cdef int st = 0, iters = 0, oc
    with nogil:
        oc = _local_min_c(n, &H_[0], &Q_[0], &b_[0], phi_tol, grad_tol, psd_strict_tol,
                          polish_steps, feas_tol, gap_tol, max_iters, iterate_as_sop, &x_[0], &phi,
                          &gn, &lmin, &st, &iters)
    if oc < 0:
        raise MemoryError
    return oc, x, phi, gn, lmin, st, iters


def local_min_batch(H, Q, b, shifts, double phi_tol=1e-6, double grad_tol=1e-6,
                    double psd_tol=1e-7, double psd_strict_tol=1e-7, int polish_steps=3,
                    double feas_tol=1e-8, double gap_tol=1e-8, int max_iters=100,
                    bint iterate_as_sop=True):
    """Shift-ladder local minimum for a stack of models (compiled).

    ``H`` has shape (N, n, n, n), ``Q`` (N, n, n), ``b`` (N, n). Returns arrays
    ``outcome, x, phi, shift_used, grad_norm, min_eig``.
    """
    b_arr = np.ascontiguousarray(b, dtype=np.float64)
    if b_arr.ndim != 2:
        raise ValueError("b must have shape (N, n)")
    cdef int N = b_arr.shape[0]
    cdef int n = b_arr.shape[1]
    cdef const double[:, ::1] b_ = b_arr
    cdef const double[:, ::1] H_ = np.ascontiguousarray(H, dtype=np.float64).reshape(N, n * n * n)
    cdef const double[:, ::1] Q_ = np.ascontiguousarray(Q, dtype=np.float64).reshape(N, n * n)
    cdef const double[::1] sh = np.ascontiguousarray(shifts, dtype=np.float64).ravel()
    cdef int ns = sh.shape[0]
    if ns < 1:
        raise ValueError("at least one shift is required")
    outcome = np.empty(N, dtype=np.intc)
    xs = np.empty((N, n))
    phi = np.empty(N)
    used = np.zeros(N)
    gns = np.empty(N)
    lmins = np.empty(N)
    cdef int[::1] oc_ = outcome
    cdef double[:, ::1] xs_ = xs
    cdef double[::1] phi_ = phi
    cdef double[::1] used_ = used
    cdef double[::1] gn_ = gns
    cdef double[::1] lm_ = lmins
    cdef double* Qs = <double*> malloc((n * n + 2 * n + 1) * sizeof(double))
    cdef double* xt = Qs + n * n
    cdef double* x0 = xt + n
    cdef int i, si, a, oc, oc0, st, iters, failed = 0
    cdef double ph, gn, lm, ph0 = 0.0, gn0 = 0.0, lm0 = 0.0
    if Qs == NULL:
        raise MemoryError
    with nogil:
        for i in range(N):
            oc0 = -2
            for si in range(ns):
                memcpy(Qs, &Q_[i, 0], n * n * sizeof(double))
                for a in range(n):
                    Qs[a * n + a] += sh[si]
                oc = _local_min_c(n, &H_[i, 0], Qs, &b_[i, 0], phi_tol, grad_tol,
                                  psd_strict_tol, polish_steps, feas_tol, gap_tol,
                                  max_iters, iterate_as_sop, xt, &ph, &gn, &lm, &st, &iters)
                if oc < 0:
                    failed = 1
                    break
                if si == 0:
                    oc0 = oc
                    ph0 = ph
                    gn0 = gn
                    lm0 = lm
                    memcpy(x0, xt, n * sizeof(double))
                if oc == OC_LOCAL_MIN or oc == OC_SECOND_ORDER_POINT:
                    oc_[i] = oc
                    memcpy(&xs_[i, 0], xt, n * sizeof(double))
                    phi_[i] = ph
                    used_[i] = sh[si]
                    gn_[i] = gn
                    lm_[i] = lm
                    break
            else:
                oc_[i] = oc0
                memcpy(&xs_[i, 0], x0, n * sizeof(double))
                phi_[i] = ph0
                used_[i] = 0.0
                gn_[i] = gn0
                lm_[i] = lm0
            if failed:
                break
    free(Qs)
    if failed:
        raise MemoryError
    return outcome, xs, phi, used, gns, lmins
