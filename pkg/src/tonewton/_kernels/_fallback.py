"""Pure numpy implementation of the hot kernels.

Mirrors ``_core.pyx`` step for step. Used when the compiled extension is not
built, and as the reference side of the backend benchmark.

Canonical problem layout shared by both backends::

    minimize    c @ v
    subject to  A @ v = b
                F0_j + sum_k v[k] * F_jk  is PSD, for each block j

Blocks are stored flat and row-major: block ``j`` of size ``m_j`` occupies
``m_j**2`` consecutive entries of ``F0`` and of every row of ``F``.
"""

import numpy as np

OPTIMAL, MAX_ITERATIONS, NUMERICAL_FAILURE, INFEASIBLE, UNBOUNDED = 0, 1, 2, 3, 4
LOCAL_MIN, SECOND_ORDER_POINT, NO_SECOND_ORDER_POINT, SOLVER_FAILED = 0, 1, 2, 3

BACKEND = "numpy"
STALL_ITERS = 8
RESCALE_THRESHOLD = 4.0
DUAL_CERT_TOL = 1e-7
DUAL_CERT_MIN = 1e-4


class _Breakdown(Exception):
    pass


def _split_blocks(block_sizes, F0, F):
    out = []
    off = 0
    nv = F.shape[0]
    for m in block_sizes:
        m = int(m)
        sl = slice(off, off + m * m)
        out.append((m, F0[sl].reshape(m, m), F[:, sl].reshape(nv, m, m)))
        off += m * m
    return out


def _chol(M):
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise _Breakdown from None


def _chol_regularized(M):
    d = max(1.0, float(np.max(np.abs(np.diag(M))))) if M.size else 1.0
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        pass
    delta = 1e-14 * d
    eye = np.eye(M.shape[0])
    while delta <= 1e-6 * d:
        try:
            return np.linalg.cholesky(M + delta * eye)
        except np.linalg.LinAlgError:
            delta *= 100.0
    raise _Breakdown


def _chol_solve(L, r):
    y = np.linalg.solve(L, r) if L.size else r
    return np.linalg.solve(L.T, y) if L.size else r


def _max_step(Ls, dS):
    """Largest alpha with S + alpha*dS PSD, given chol(S) = Ls; inf if unbounded."""
    W = np.linalg.solve(Ls, np.linalg.solve(Ls, dS).T)
    lmin = np.linalg.eigvalsh(0.5 * (W + W.T))[0]
    if lmin >= 0.0:
        return np.inf
    return -1.0 / lmin


def ipm_solve(c, A, b, block_sizes, F0, F, feas_tol=1e-8, gap_tol=1e-8,
              max_iters=100, step_frac=0.98, infeas_tol=1e-8):
    """Homogeneous self-dual primal-dual path following.

    HKM search direction with a Mehrotra predictor-corrector. The embedding
    variables ``tau``/``kappa`` let the same iteration converge to either an
    optimal pair or an infeasibility ray. Returns a dict with ``status``,
    ``iterations``, ``v``, ``lam``, ``S``, ``Z`` (flat blocks, de-homogenized),
    ``pobj``, ``dobj``, ``pres``, ``dres``, ``gap`` and ``mu_history``.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, c.size)
    b = np.asarray(b, dtype=float)
    F0 = np.asarray(F0, dtype=float)
    F = np.asarray(F, dtype=float).reshape(c.size, -1)
    nv, me = c.size, b.size
    blocks = _split_blocks(block_sizes, F0, F)
    N = sum(m for m, _, _ in blocks)

    scale = 1.0
    for arr in (c, A, b, F0, F):
        if arr.size:
            scale = max(scale, float(np.max(np.abs(arr))))

    v = np.zeros(nv)
    lam = np.zeros(me)
    S = [scale * np.eye(m) for m, _, _ in blocks]
    Z = [scale * np.eye(m) for m, _, _ in blocks]
    tau, kappa = 1.0, scale * scale

    def fmap(x):
        return [np.tensordot(x, Fj, axes=1) for _, _, Fj in blocks]

    def fstar(Ms):
        out = np.zeros(nv)
        for (_, _, Fj), Mj in zip(blocks, Ms):
            out += np.einsum("kab,ab->k", Fj, Mj)
        return out

    def tr0(Ms):
        return sum(float(np.sum(F0j * Mj)) for (_, F0j, _), Mj in zip(blocks, Ms))

    def inner(P, R):
        return sum(float(np.sum(Pj * Rj)) for Pj, Rj in zip(P, R))

    dnorm_p = max(float(np.max(np.abs(b))) if me else 0.0, float(np.max(np.abs(F0))) if F0.size else 0.0)
    dnorm_d = float(np.max(np.abs(c))) if nv else 0.0

    mu_history = []
    status = MAX_ITERATIONS
    it = 0
    best = None
    last_progress = 0
    best_progress = np.inf

    while True:
        Fv = fmap(v)
        fz = fstar(Z)
        rx = -A.T @ lam - fz + c * tau
        ry = -A @ v + b * tau
        rz = [Sj - Fvj - tau * F0j for Sj, Fvj, (_, F0j, _) in zip(S, Fv, blocks)]
        cv = float(c @ v)
        bl = float(b @ lam) - tr0(Z)
        rt = kappa + cv - bl
        trsz = inner(S, Z)
        mu = (trsz + tau * kappa) / (N + 1)
        mu_history.append(mu)

        pobj = cv / tau
        dobj = bl / tau
        # residuals relative to 1 + magnitude of the terms they compare
        pnorm = max([dnorm_p] + [float(np.max(np.abs(Sj))) / tau for Sj in S])
        dnorm = max(dnorm_d, float(np.max(np.abs(fz))) / tau if nv else 0.0,
                    float(np.max(np.abs(A.T @ lam))) / tau if me else 0.0)
        pres = max([float(np.max(np.abs(ry))) if me else 0.0]
                   + [float(np.max(np.abs(R))) for R in rz]) / tau / (1.0 + pnorm)
        dres = (float(np.max(np.abs(rx))) if nv else 0.0) / tau / (1.0 + dnorm)
        gap = trsz / (tau * tau)
        rel = max(1.0, abs(pobj), abs(dobj))

        snap = dict(v=v / tau, lam=lam / tau,
                    S=np.concatenate([s.ravel() for s in S]) / tau,
                    Z=np.concatenate([z.ravel() for z in Z]) / tau,
                    pobj=pobj, dobj=dobj, pres=pres, dres=dres, gap=gap,
                    dres_abs=(float(np.max(np.abs(rx))) if nv else 0.0) / tau)
        merit = max(pres, dres, gap / rel)
        ray_p = np.inf
        if bl > 0.0:
            ray_p = (float(np.max(np.abs(A.T @ lam + fz))) if nv else 0.0) / bl
        progress = min(merit, ray_p)
        if progress < 0.5 * best_progress:
            best_progress = progress
            last_progress = it
        if best is None or merit <= best[0]:
            best = (merit, snap)

        if pres <= feas_tol and dres <= feas_tol and gap <= gap_tol * rel:
            status = OPTIMAL
            best = (merit, snap)
            break
        if ray_p <= infeas_tol:
                status = INFEASIBLE
                best = (merit, snap)
                break
        if cv < 0.0:
            ray = max([float(np.max(np.abs(A @ v))) if me else 0.0]
                      + [float(np.max(np.abs(Fvj - Sj))) for Fvj, Sj in zip(Fv, S)])
            if ray <= infeas_tol * -cv:
                status = UNBOUNDED
                best = (merit, snap)
                break
        if it >= max_iters:
            status = MAX_ITERATIONS
            break
        if it - last_progress >= STALL_ITERS:
            status = NUMERICAL_FAILURE
            break

        try:
            Ls = [_chol(Sj) for Sj in S]
            Lz = [_chol(Zj) for Zj in Z]
            Sinv = []
            for L in Ls:
                Li = np.linalg.inv(L)
                Sinv.append(Li.T @ Li)

            # Schur matrix M_kl = sum_j Tr(F_jk Sinv_j F_jl Z_j)
            M = np.zeros((nv, nv))
            for (_, _, Fj), Si, Zj in zip(blocks, Sinv, Z):
                G = np.einsum("ab,lbc,cd->lad", Si, Fj, Zj)
                M += np.einsum("kab,lab->kl", Fj, G)
            M = 0.5 * (M + M.T)
            # M is singular when F has a null space; adding rho*A^T A leaves the
            # KKT solution unchanged (the rhs is shifted by rho*A^T r2) and
            # restores definiteness whenever null(F) and null(A) meet only at 0
            rho = 0.0
            if me:
                AtA = A.T @ A
                rho = max(float(np.max(np.diag(M))), 1e-300) / max(float(np.max(np.diag(AtA))), 1e-300)
                M = M + rho * AtA
            LM = _chol_regularized(M)
            if me:
                LK = _chol_regularized(A @ _chol_solve(LM, A.T))

            S0Z = [Si @ F0j @ Zj for Si, (_, F0j, _), Zj in zip(Sinv, blocks, Z)]
            u = fstar(S0Z)
            SrZ = [Si @ R @ Zj for Si, R, Zj in zip(Sinv, rz, Z)]
            fSrZ = fstar(SrZ)
            t0SrZ = tr0(SrZ)

            def kkt(r1, r2):
                if me:
                    r1 = r1 + rho * (A.T @ r2)
                Mr = _chol_solve(LM, r1)
                if me:
                    dl = _chol_solve(LK, r2 - A @ Mr)
                    return _chol_solve(LM, r1 + A.T @ dl), dl
                return Mr, np.zeros(0)

            p2v, p2l = kkt(c + u, -b)
            # den = -(||F(p2v) - F0||_W^2 + kappa/tau), a sum of squares
            den = -kappa / tau
            for Fd, (_, F0j, _), L, Lzj in zip(fmap(p2v), blocks, Ls, Lz):
                T = np.linalg.solve(L, Fd - F0j) @ Lzj
                den -= float(np.sum(T * T))

            def direction(Rc, eta, corr_tk, sm):
                w = fstar(Rc) + (1.0 - eta) * fSrZ
                rho = tr0(Rc) + (1.0 - eta) * t0SrZ
                q = sm - tau * kappa - corr_tk
                p1v, p1l = kkt(-(1.0 - eta) * rx + w, (1.0 - eta) * ry)
                r3 = -(1.0 - eta) * rt - rho - q / tau
                num = r3 - float((c - u) @ p1v) + float(b @ p1l)
                dtau = num / den
                dv = p1v - dtau * p2v
                dl = p1l - dtau * p2l
                dS = [Fd + dtau * F0j - (1.0 - eta) * R
                      for Fd, (_, F0j, _), R in zip(fmap(dv), blocks, rz)]
                dZ = []
                for Rcj, Si, dSj, Zj in zip(Rc, Sinv, dS, Z):
                    T = Rcj - Si @ dSj @ Zj
                    dZ.append(0.5 * (T + T.T))
                dkappa = (q - kappa * dtau) / tau
                if not np.isfinite(dtau) or not np.all(np.isfinite(dv)):
                    raise _Breakdown
                return dv, dl, dS, dZ, dtau, dkappa

            def max_alpha(dS, dZ, dtau, dkappa):
                a = min([_max_step(L, d) for L, d in zip(Ls, dS)]
                        + [_max_step(L, d) for L, d in zip(Lz, dZ)] + [np.inf])
                if dtau < 0.0:
                    a = min(a, -tau / dtau)
                if dkappa < 0.0:
                    a = min(a, -kappa / dkappa)
                return a

            # predictor
            dv, dl, dS, dZ, dtau, dkappa = direction([-Zj for Zj in Z], 0.0, 0.0, 0.0)
            a_aff = min(1.0, max_alpha(dS, dZ, dtau, dkappa))
            sigma = (1.0 - a_aff) ** 3

            # corrector
            Rc = [sigma * mu * Si - Zj - Si @ a @ d
                  for Si, Zj, a, d in zip(Sinv, Z, dS, dZ)]
            dv, dl, dS, dZ, dtau, dkappa = direction(Rc, sigma, dtau * dkappa, sigma * mu)
            alpha = min(1.0, step_frac * max_alpha(dS, dZ, dtau, dkappa))
            for _ in range(30):
                mu_new = (inner([Sj + alpha * a for Sj, a in zip(S, dS)],
                                [Zj + alpha * d for Zj, d in zip(Z, dZ)])
                          + (tau + alpha * dtau) * (kappa + alpha * dkappa)) / (N + 1)
                if mu_new <= 1.01 * mu:
                    break
                alpha *= 0.5
        except (_Breakdown, np.linalg.LinAlgError, ZeroDivisionError):
            status = NUMERICAL_FAILURE
            break

        v = v + alpha * dv
        lam = lam + alpha * dl
        S = [Sj + alpha * d for Sj, d in zip(S, dS)]
        Z = [Zj + alpha * d for Zj, d in zip(Z, dZ)]
        tau += alpha * dtau
        kappa += alpha * dkappa
        it += 1

    out = best[1]
    out.update(status=status, iterations=it, mu_history=np.array(mu_history))
    return out


def cubic_sdp_arrays(H, Q, b):
    """Canonical arrays of the local-minimum SDP for one cubic model.

    Variable order: ``x`` (n), ``y``, then the upper triangle of ``X`` row by
    row. Block 0 is the Hessian-type block, block 1 is ``[[X, x], [x^T, 1]]``.
    """
    H = np.asarray(H, dtype=float)
    Q = np.asarray(Q, dtype=float)
    b = np.asarray(b, dtype=float)
    n = b.size
    m = n + 1
    tri = [(a, bb) for a in range(n) for bb in range(a, n)]
    nv = n + 1 + len(tri)
    iy = n

    c = np.zeros(nv)
    c[:n] = b
    c[iy] = 0.5
    A = np.zeros((n, nv))
    A[:, :n] = Q
    beq = -b.copy()
    F0 = np.zeros((2, m, m))
    F = np.zeros((nv, 2, m, m))

    F0[0, :n, :n] = Q
    F0[1, n, n] = 1.0
    for l in range(n):
        F[l, 0, :n, :n] = H[l]
        F[l, 0, :n, n] = Q[:, l]
        F[l, 0, n, :n] = Q[:, l]
        F[l, 1, l, n] = 1.0
        F[l, 1, n, l] = 1.0
    F[iy, 0, n, n] = 1.0
    for t, (a, bb) in enumerate(tri):
        k = n + 1 + t
        if a == bb:
            c[k] = 0.5 * Q[a, a]
            A[:, k] = 0.5 * H[:, a, a]
            F[k, 0, :n, n] = H[:, a, a]
            F[k, 0, n, :n] = H[:, a, a]
            F[k, 1, a, a] = 1.0
        else:
            c[k] = Q[a, bb]
            A[:, k] = H[:, a, bb]
            F[k, 0, :n, n] = 2.0 * H[:, a, bb]
            F[k, 0, n, :n] = 2.0 * H[:, a, bb]
            F[k, 1, a, bb] = 1.0
            F[k, 1, bb, a] = 1.0
    return c, A, beq, np.array([m, m], dtype=np.intc), F0.ravel(), F.reshape(nv, -1)


def _model_grad_hess(H, Q, b, x):
    Hx = np.tensordot(x, H, axes=1)
    return 0.5 * Hx @ x + Q @ x + b, Hx + Q


def _sdp_point(H, Q, b, feas_tol, gap_tol, max_iters):
    n = len(b)
    # normalize the data to unit max-abs; minimizers are unchanged and phi is
    # reported for the normalized problem so that phi_tol is scale-free
    k = max(float(np.max(np.abs(H), initial=0.0)),
            float(np.max(np.abs(Q), initial=0.0)),
            float(np.max(np.abs(b), initial=0.0)))
    if not k > 0.0:
        k = 1.0
    res = ipm_solve(*cubic_sdp_arrays(H / k, Q / k, b / k), feas_tol, gap_tol,
                    max_iters)
    return res["status"], res["v"][:n].copy(), res["pobj"], res["iterations"], res


def local_min(H, Q, b, phi_tol=1e-6, grad_tol=1e-6, psd_tol=1e-7,
              psd_strict_tol=1e-7, polish_steps=3, feas_tol=1e-8,
              gap_tol=1e-8, max_iters=100, iterate_as_sop=True):
    """Solve the SDP for one model and classify the extracted point.

    With ``iterate_as_sop`` a solved SDP whose phi exceeds ``phi_tol`` still
    yields its x, reported as a second-order point (the caller sees phi).

    Returns ``(outcome, x, phi, grad_norm, min_eig, solver_status, iters)``.
    """
    H = np.asarray(H, dtype=float)
    Q = np.asarray(Q, dtype=float)
    b = np.asarray(b, dtype=float)
    n = len(b)
    st, x, phi, iters, res = _sdp_point(H, Q, b, feas_tol, gap_tol, max_iters)
    unclear = st in (MAX_ITERATIONS, NUMERICAL_FAILURE) or (
        st == OPTIMAL and phi > phi_tol)
    if unclear and np.all(np.isfinite(x)):
        s = float(np.max(np.abs(x))) if n else 0.0
        if s > RESCALE_THRESHOLD:
            # re-solve in z = x / s; a far-away point makes the blocks ill-conditioned
            st2, z, phi2, it2, res2 = _sdp_point(s ** 3 * H, s ** 2 * Q, s * b,
                                                 feas_tol, gap_tol, max_iters)
            iters += it2
            if st2 in (OPTIMAL, INFEASIBLE, UNBOUNDED) or st != OPTIMAL:
                st, x, phi, res = st2, s * z, phi2, res2
    bound = res["dobj"] - res["dres_abs"] * float(np.sum(np.abs(res["v"])))
    if (st in (MAX_ITERATIONS, NUMERICAL_FAILURE) and res["dres"] <= DUAL_CERT_TOL
            and bound > DUAL_CERT_MIN):
        # a nearly feasible dual point bounds phi from below: no second-order point
        return (NO_SECOND_ORDER_POINT, np.full(n, float("nan")), res["dobj"],
                float("nan"), float("nan"), st, iters)
    nan = float("nan")
    if st in (INFEASIBLE, UNBOUNDED):
        # phi is nonnegative on the feasible set, so an improving ray means
        # the primal is empty as well
        return NO_SECOND_ORDER_POINT, np.full(n, nan), np.inf, nan, nan, st, iters
    if st != OPTIMAL:
        return SOLVER_FAILED, np.full(n, nan), phi, nan, nan, st, iters
    if phi > phi_tol and not iterate_as_sop:
        return NO_SECOND_ORDER_POINT, np.full(n, nan), phi, nan, nan, st, iters
    if phi > phi_tol:
        # solved SDP without a second-order point: report its x unpolished
        g, Hm = _model_grad_hess(H, Q, b, x)
        lmin = float(np.linalg.eigvalsh(0.5 * (Hm + Hm.T))[0])
        return SECOND_ORDER_POINT, x, phi, float(np.linalg.norm(g)), lmin, st, iters
    g, Hm = _model_grad_hess(H, Q, b, x)
    gn = float(np.linalg.norm(g))
    for _ in range(polish_steps):
        try:
            xn = x - np.linalg.solve(Hm, g)
        except np.linalg.LinAlgError:
            break
        gnew, Hnew = _model_grad_hess(H, Q, b, xn)
        gnn = float(np.linalg.norm(gnew))
        if not gnn < gn:
            break
        x, g, Hm, gn = xn, gnew, Hnew, gnn
    lmin = float(np.linalg.eigvalsh(0.5 * (Hm + Hm.T))[0])
    if gn <= grad_tol and lmin >= psd_strict_tol:
        outcome = LOCAL_MIN
    else:
        outcome = SECOND_ORDER_POINT
    return outcome, x, phi, gn, lmin, st, iters


def local_min_batch(H, Q, b, shifts, phi_tol=1e-6, grad_tol=1e-6, psd_tol=1e-7,
                    psd_strict_tol=1e-7, polish_steps=3, feas_tol=1e-8,
                    gap_tol=1e-8, max_iters=100, iterate_as_sop=True):
    """Shift-ladder local minimum for a stack of models.

    ``H`` has shape (N, n, n, n), ``Q`` (N, n, n), ``b`` (N, n). Returns arrays
    ``outcome, x, phi, shift_used, grad_norm, min_eig``.
    """
    H = np.asarray(H, dtype=float)
    Q = np.asarray(Q, dtype=float)
    b = np.asarray(b, dtype=float)
    N, n = b.shape
    outcome = np.empty(N, dtype=np.intc)
    xs = np.empty((N, n))
    phi = np.empty(N)
    used = np.zeros(N)
    gns = np.empty(N)
    lmins = np.empty(N)
    eye = np.eye(n)
    for i in range(N):
        first = None
        for s_idx, sigma in enumerate(shifts):
            r = local_min(H[i], Q[i] + sigma * eye, b[i], phi_tol, grad_tol, psd_tol,
                          psd_strict_tol, polish_steps, feas_tol, gap_tol, max_iters,
                          iterate_as_sop)
            if s_idx == 0:
                first = (r, 0.0)
            if r[0] in (LOCAL_MIN, SECOND_ORDER_POINT):
                first = (r, float(sigma))
                break
        (o, x, p, gn, lm, _, _), sg = first
        outcome[i] = o
        xs[i] = x
        phi[i] = p
        used[i] = sg
        gns[i] = gn
        lmins[i] = lm
    return outcome, xs, phi, used, gns, lmins
