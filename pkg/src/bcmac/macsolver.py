"""Convex solvers on the dual multiple-access channel.

All three problems share the same geometry: base-station noise covariance A
(any positive definite matrix), per-user uplink covariances or powers, and a
weighted sum power sum_i sigma_i^2 tr(Q_i).  Internally everything is
whitened (channels (H_i / sigma_i) A^{-1/2}, identity noise, plain trace
budget), where the weighted-sum-rate problem is concave and has a cheap exact
projection, so projected gradient ascent with Armijo backtracking suffices.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import linalg, model
from .errors import InfeasibleTargets, InvalidInput, MaxItersExceeded

KKT_TOL_FACTOR = 10.0  # returned kkt_residual is driven below this times tol


@dataclass(frozen=True)
class SolverSettings:
    max_iters: int = 4000
    tol: float = 1e-6
    armijo_beta: float = 0.5
    armijo_c: float = 0.1
    pd_floor: float = 1e-8
    restarts: int = 2
    seed: int = 0

    def __post_init__(self):
        if not (self.tol > 0):
            raise InvalidInput("tol must be positive")
        if not (0 < self.armijo_beta < 1 and 0 < self.armijo_c < 1):
            raise InvalidInput("Armijo parameters must lie in (0, 1)")


@dataclass
class MacSolution:
    cov: model.CovarianceSet
    objective: float
    iterations: int
    kkt_residual: float
    converged: bool = True


def _whitened(ch, noise, pd_floor):
    W = linalg.inv_sqrt(noise, floor=pd_floor)
    return [ch.H[i] / np.sqrt(ch.sigma2[i]) @ W for i in range(ch.K)]


def _rate_coeffs(ch, weights):
    """Coefficients c_m of the telescoped objective
    sum_i w_i r_i = sum_m c_m logdet(Phi_m) over encoding positions."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape != (ch.K,):
        raise InvalidInput(f"weights must have length {ch.K}")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise InvalidInput("weights must be positive and finite")
    order = ch.encoding_order
    c = np.empty(ch.K)
    for m in range(ch.K):
        nxt = w[order[m + 1]] if m + 1 < ch.K else 0.0
        c[m] = w[order[m]] - nxt
    return c


def _cum_mats(ch, Ghat, Z):
    nt = Ghat[0].shape[1]
    cum = np.eye(nt, dtype=np.complex128)
    out = []
    for m in range(ch.K):
        i = ch.encoding_order[m]
        cum = cum + Ghat[i].conj().T @ Z[i] @ Ghat[i]
        out.append(cum)
    return out


def _objective(ch, Ghat, coeffs, Z):
    val = 0.0
    for m, Phi in enumerate(_cum_mats(ch, Ghat, Z)):
        sign, ld = np.linalg.slogdet(Phi)
        if sign.real <= 0:
            return -np.inf
        val += coeffs[m] * ld
    return float(val)


def _gradient(ch, Ghat, coeffs, Z):
    """d(objective)/dZ_i = sum_{m >= pos(i)} c_m Ghat_i Phi_m^{-1} Ghat_i^H."""
    mats = _cum_mats(ch, Ghat, Z)
    K = ch.K
    nt = Ghat[0].shape[1]
    suffix = np.zeros((nt, nt), dtype=np.complex128)
    weighted = [None] * K
    for m in range(K - 1, -1, -1):
        suffix = suffix + coeffs[m] * np.linalg.inv(mats[m])
        weighted[m] = suffix
    grads = [None] * K
    for m in range(K):
        i = ch.encoding_order[m]
        g = Ghat[i] @ weighted[m] @ Ghat[i].conj().T
        grads[i] = linalg.hermitian_part(g)
    return grads


def _project_blocks(mats, budget):
    """Exact Euclidean projection onto {Z_i >= 0, sum_i tr(Z_i) <= budget}:
    eigen-clip every block, and if the trace budget is exceeded subtract the
    common level mu solving sum (lam - mu)_+ = budget."""
    eigs, vecs = [], []
    for M in mats:
        w, V = np.linalg.eigh(linalg.hermitian_part(M))
        eigs.append(w)
        vecs.append(V)
    lam = np.concatenate(eigs)
    clipped = np.maximum(lam, 0.0)
    if clipped.sum() > budget:
        # common shift mu with sum (lam - mu)_+ = budget: keep the largest
        # rho eigenvalues active, where rho is the last k with srt[k] > mu_k
        srt = np.sort(lam)[::-1]
        csum = np.cumsum(srt)
        ks = np.arange(1, srt.size + 1)
        mu_cand = (csum - budget) / ks
        active = np.nonzero(srt > mu_cand)[0]
        if active.size == 0:
            clipped = np.zeros_like(lam)
        else:
            mu = mu_cand[active[-1]]
            clipped = np.maximum(lam - mu, 0.0)
    out = []
    pos = 0
    for w, V in zip(eigs, vecs):
        z = clipped[pos:pos + w.size]
        pos += w.size
        out.append((V * z) @ V.conj().T)
    return out


def _inner(a, b):
    return float(sum(np.real(np.trace(x.conj().T @ y)) for x, y in zip(a, b)))


def _run_pg(ch, Ghat, coeffs, budget, settings, Z0):
    """Projected gradient ascent with Armijo backtracking from Z0."""
    Z = _project_blocks(Z0, budget)
    obj = _objective(ch, Ghat, coeffs, Z)
    t = 1.0
    iters = 0
    kkt = np.inf
    check_every = 10
    for it in range(settings.max_iters):
        iters = it + 1
        grads = _gradient(ch, Ghat, coeffs, Z)
        accepted = False
        for _ in range(60):
            cand = _project_blocks([Z[i] + t * grads[i] for i in range(ch.K)], budget)
            step = [cand[i] - Z[i] for i in range(ch.K)]
            progress = _inner(grads, step)
            if progress <= 1e-18 * max(1.0, abs(obj)):
                break
            new_obj = _objective(ch, Ghat, coeffs, cand)
            if new_obj >= obj + settings.armijo_c * progress:
                rel = abs(new_obj - obj) / max(1.0, abs(new_obj))
                Z, obj = cand, new_obj
                accepted = True
                t = min(t * 2.0, 1e8)
                break
            t *= settings.armijo_beta
        if not accepted:
            kkt = _kkt_from_state(Z, grads, budget)
            return Z, obj, iters, kkt, True
        if accepted and (rel < settings.tol or it % check_every == check_every - 1):
            kkt = _kkt_from_state(Z, _gradient(ch, Ghat, coeffs, Z), budget)
            if kkt <= KKT_TOL_FACTOR * settings.tol:
                return Z, obj, iters, kkt, True
    kkt = _kkt_from_state(Z, _gradient(ch, Ghat, coeffs, Z), budget)
    return Z, obj, iters, kkt, kkt <= KKT_TOL_FACTOR * settings.tol


def _ls_multiplier(Z, grads, budget, rank_tol=1e-9):
    """Least-squares multiplier of the trace budget: the mean diagonal of the
    gradient restricted to the ranges of the Z_i (the sensitivity of the
    optimal value to the budget at an exact optimum)."""
    used = sum(float(np.trace(Zi).real) for Zi in Z)
    slack = budget - used
    bases = []
    rank_sum = 0
    tr_sum = 0.0
    for Zi, Gi in zip(Z, grads):
        w, V = np.linalg.eigh(linalg.hermitian_part(Zi))
        mask = w > rank_tol * max(1.0, float(w[-1]))
        B = V.conj().T @ Gi @ V
        bases.append((mask, B))
        rank_sum += int(mask.sum())
        tr_sum += float(np.real(np.trace(B[np.ix_(mask, mask)]))) if mask.any() else 0.0
    if slack > 1e-9 * max(1.0, budget):
        lam = 0.0
    elif rank_sum > 0:
        lam = max(0.0, tr_sum / rank_sum)
    else:
        lam = max(0.0, max(float(np.linalg.eigvalsh(B)[-1]) for _, B in bases))
    return lam, bases


def _kkt_from_state(Z, grads, budget, rank_tol=1e-9):
    """Stationarity residual of the whitened problem at covariances Z.

    Least-squares trace multiplier on the ranges of the Z_i, then the norm of
    the residual gradient projected on the feasible-cone tangent: free blocks
    on each range, positive part only on each null space.  Zero at an exact
    maximizer.
    """
    lam, bases = _ls_multiplier(Z, grads, budget, rank_tol)
    worst = 0.0
    for mask, B in bases:
        R = B - lam * np.eye(B.shape[0])
        rr = R[np.ix_(mask, mask)]
        rn = R[np.ix_(mask, ~mask)]
        nn = R[np.ix_(~mask, ~mask)]
        res_sq = np.sum(np.abs(rr) ** 2) + 2.0 * np.sum(np.abs(rn) ** 2)
        if nn.size:
            w = np.linalg.eigvalsh(linalg.hermitian_part(nn))
            res_sq += float(np.sum(np.maximum(w, 0.0) ** 2))
        worst = max(worst, float(np.sqrt(res_sq)))
    return worst


def solve_wsr_mac(ch, noise, budget, weights, settings=None, init=None):
    """Maximize sum_i w_i r_i over uplink covariances subject to the weighted
    sum power sum_i sigma_i^2 tr(Q_i) <= budget, with base-station noise
    covariance ``noise``.

    Decode order is fixed by the channel set (reverse of encoding order).
    Runs ``settings.restarts`` projected-gradient ascents from different
    initial points (``init``, an uplink CovarianceSet, replaces the default
    first point to warm-start outer loops); the whitened problem is concave
    for weights aligned with the order, so restarts must agree.  On hitting
    the iteration budget the best iterate is returned with
    ``converged=False``.
    """
    settings = settings or SolverSettings()
    if not (budget >= 0):
        raise InvalidInput("budget must be nonnegative")
    Ghat = _whitened(ch, noise, settings.pd_floor)
    coeffs = _rate_coeffs(ch, weights)
    nr = ch.nr
    if budget == 0.0:
        cov = model.CovarianceSet.zeros(model.MAC, ch.K, nr)
        return MacSolution(cov, 0.0, 0, 0.0, True)
    rng = np.random.default_rng(settings.seed)
    if init is not None:
        inits = [[ch.sigma2[i] * init.Q[i] for i in range(ch.K)]]
    else:
        inits = [[budget / (ch.K * nr) * np.eye(nr, dtype=np.complex128)
                  for _ in range(ch.K)]]
    for _ in range(max(0, settings.restarts - 1)):
        blocks = []
        for _ in range(ch.K):
            X = rng.normal(size=(nr, nr)) + 1j * rng.normal(size=(nr, nr))
            blocks.append(X @ X.conj().T)
        tot = sum(float(np.trace(B).real) for B in blocks)
        blocks = [B * (budget / tot) for B in blocks]
        inits.append(blocks)
    best = None
    total_iters = 0
    objs = []
    for Z0 in inits:
        Z, obj, iters, kkt, ok = _run_pg(ch, Ghat, coeffs, budget, settings, Z0)
        total_iters += iters
        objs.append(obj)
        if best is None or obj > best[1]:
            best = (Z, obj, kkt, ok)
    Z, obj, kkt, ok = best
    agree = max(objs) - min(objs) <= KKT_TOL_FACTOR * settings.tol * max(1.0, abs(obj))
    cov = model.CovarianceSet(model.MAC, [Z[i] / ch.sigma2[i] for i in range(ch.K)])
    return MacSolution(cov, obj, total_iters, kkt, bool(ok and agree))


def kkt_residual_wsr(ch, noise, budget, weights, cov, pd_floor=linalg.PD_FLOOR):
    """Stationarity residual of a feasible uplink covariance set for the
    weighted-sum-rate problem; ~0 at an exact optimum."""
    Ghat = _whitened(ch, noise, pd_floor)
    coeffs = _rate_coeffs(ch, weights)
    Z = [ch.sigma2[i] * cov.Q[i] for i in range(ch.K)]
    grads = _gradient(ch, Ghat, coeffs, Z)
    budget = float(budget) if budget is not None else sum(
        float(np.trace(Zi).real) for Zi in Z
    )
    return _kkt_from_state(Z, grads, budget)


def budget_multiplier_wsr(ch, noise, budget, weights, cov,
                          pd_floor=linalg.PD_FLOOR):
    """Sensitivity of the optimal weighted sum rate to the power budget (the
    budget constraint's Lagrange multiplier) estimated at ``cov`` by least
    squares on the active eigenspaces."""
    Ghat = _whitened(ch, noise, pd_floor)
    coeffs = _rate_coeffs(ch, weights)
    Z = [ch.sigma2[i] * cov.Q[i] for i in range(ch.K)]
    grads = _gradient(ch, Ghat, coeffs, Z)
    lam, _ = _ls_multiplier(Z, grads, float(budget))
    return lam


def mac_wsr_objective(ch, noise, weights, cov):
    """Weighted sum rate sum_i w_i r_i of an uplink covariance set."""
    r = model.mac_rates(ch, cov, noise)
    w = np.asarray(weights, dtype=float).reshape(-1)
    return float(w @ r)


def _single_stream_setup(ch):
    """Initial user-side unit vectors: the top left singular vector of each
    channel (for one receive antenna this is just the scalar 1)."""
    v = []
    for i in range(ch.K):
        if ch.nr == 1:
            v.append(np.ones((1, 1), dtype=np.complex128))
        else:
            U, _, _ = np.linalg.svd(ch.H[i])
            v.append(U[:, :1].T)
    return [vi / np.linalg.norm(vi) for vi in v]


def _mac_links(ch, v):
    """Effective uplink signal vectors at the base station, g_i = H_i^H v_i."""
    return [ch.H[i].conj().T @ v[i].ravel() for i in range(ch.K)]


def _receive_update(ch, A, g, q):
    """MMSE receive vectors in encoding order given uplink powers q."""
    u = [None] * ch.K
    interf = A.astype(np.complex128)
    for m in range(ch.K):
        i = ch.encoding_order[m]
        ui = np.linalg.solve(interf, g[i])
        n = np.linalg.norm(ui)
        if n <= 0:
            raise InfeasibleTargets(f"user {i}: zero effective channel")
        u[i] = ui / n
        interf = interf + q[i] * np.outer(g[i], g[i].conj())
    return u


def _link_gains(ch, A, g, u):
    """a_i = |u_i^H g_i|^2, b[i][k] = |u_i^H g_k|^2 for earlier-encoded k,
    c_i = u_i^H A u_i."""
    K = ch.K
    a = np.zeros(K)
    c = np.zeros(K)
    b = np.zeros((K, K))
    for m in range(K):
        i = ch.encoding_order[m]
        a[i] = abs(np.vdot(u[i], g[i])) ** 2
        c[i] = float(np.real(u[i].conj() @ A @ u[i]))
        for mm in range(m):
            k = ch.encoding_order[mm]
            b[i, k] = abs(np.vdot(u[i], g[k])) ** 2
    return a, b, c


def _powers_for_ratio(ch, targets, a, b, c, alpha):
    """Uplink powers meeting SINR_i = alpha * gamma_i exactly, filled in
    encoding order (each user only sees earlier-encoded interference)."""
    K = ch.K
    q = np.zeros(K)
    for m in range(K):
        i = ch.encoding_order[m]
        if a[i] <= 0:
            raise InfeasibleTargets(f"user {i}: zero effective channel gain")
        interf = c[i] + sum(b[i, ch.encoding_order[mm]] * q[ch.encoding_order[mm]]
                            for mm in range(m))
        q[i] = alpha * targets.gamma[i] * interf / a[i]
    return q


def _downlink_receiver_update(ch, A, u, v, q):
    """Refresh user-side vectors as downlink MMSE receivers.

    The SINR-preserving map to the downlink keeps the vectors and reproduces
    every SINR; downlink receive vectors interfere with nobody, so replacing
    them by MMSE weakly improves every stream and the next uplink rebalance
    can only raise the balanced ratio.
    """
    from . import transforms

    bf = model.BeamformingSolution(
        u=[u[i].reshape(1, -1) for i in range(ch.K)],
        v=[v[i].reshape(1, -1) for i in range(ch.K)],
        q=[np.array([q[i]]) for i in range(ch.K)],
    )
    bf_bc = transforms.mac_to_bc_sinr(ch, bf, A)
    p = [bf_bc.p[i][0] for i in range(ch.K)]
    beams = [bf_bc.u[i][0] for i in range(ch.K)]
    vnew = model.bc_mmse_receivers(ch, beams, p)
    return [vi.reshape(1, -1) for vi in vnew]


def solve_sinr_balance_mac(ch, noise, budget, targets, settings=None):
    """Maximize the common ratio alpha = SINR_i / gamma_i on the dual uplink
    under sum_i sigma_i^2 q_i = budget, one stream per user.

    Alternates MMSE receive vectors at the base station with an exact power
    rebalance: for fixed vectors the powers meeting a common ratio are a
    triangular system, and the ratio exhausting the budget is found by
    bisection.  When users have several antennas the user-side vectors are
    refreshed as downlink MMSE receivers through the SINR-preserving
    transformation, which keeps the iteration monotone.  At return every
    ratio equals alpha to within the bisection tolerance.
    """
    settings = settings or SolverSettings()
    A = linalg.check_hermitian(noise, name="noise")
    linalg.assert_pd(A, floor=settings.pd_floor, name="uplink noise covariance")
    if targets.gamma.shape != (ch.K,):
        raise InvalidInput(f"need {ch.K} SINR targets")
    if not (budget > 0):
        raise InvalidInput("budget must be positive")
    v = _single_stream_setup(ch)
    q = np.zeros(ch.K)
    alpha = 0.0
    sig2 = np.array([ch.sigma2[i] for i in range(ch.K)])
    for it in range(settings.max_iters):
        g = _mac_links(ch, v)
        u = _receive_update(ch, A, g, q)
        a, b, c = _link_gains(ch, A, g, u)

        def total(al):
            return float(sig2 @ _powers_for_ratio(ch, targets, a, b, c, al))

        hi = max(alpha, 1.0)
        while total(hi) < budget:
            hi *= 2.0
            if hi > 1e30:
                raise InfeasibleTargets("balance ratio diverged")
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if total(mid) <= budget:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-14 * max(hi, 1.0):
                break
        new_alpha = lo
        q = _powers_for_ratio(ch, targets, a, b, c, new_alpha)
        if it > 0 and abs(new_alpha - alpha) <= settings.tol * max(new_alpha, 1e-300):
            alpha = new_alpha
            break
        alpha = new_alpha
        if ch.nr > 1:
            v = _downlink_receiver_update(ch, A, u, v, q)
    else:
        raise MaxItersExceeded("SINR balancing did not converge")
    bf = model.BeamformingSolution(
        u=[u[i].reshape(1, -1) for i in range(ch.K)],
        v=[v[i].reshape(1, -1) for i in range(ch.K)],
        q=[np.array([q[i]]) for i in range(ch.K)],
    )
    return alpha, bf


def solve_power_min_mac(ch, noise, targets, settings=None):
    """Minimize sum_i sigma_i^2 q_i on the dual uplink subject to
    SINR_i >= gamma_i, one stream per user.

    The successive-decoding structure makes the minimum a forward pass: each
    user's power is set to meet its target exactly against already-fixed
    earlier interference, with MMSE receive vectors recomputed each sweep.
    Power growth beyond 1e12 raises InfeasibleTargets.
    """
    settings = settings or SolverSettings()
    A = linalg.check_hermitian(noise, name="noise")
    linalg.assert_pd(A, floor=settings.pd_floor, name="uplink noise covariance")
    if targets.gamma.shape != (ch.K,):
        raise InvalidInput(f"need {ch.K} SINR targets")
    v = _single_stream_setup(ch)
    q = np.zeros(ch.K)
    u = None
    for it in range(settings.max_iters):
        g = _mac_links(ch, v)
        # Gauss-Seidel sweep: receive vector and power per user in encoding
        # order, against the interference of already-updated earlier users
        new_q = np.zeros(ch.K)
        u = [None] * ch.K
        interf = A.astype(np.complex128)
        for m in range(ch.K):
            i = ch.encoding_order[m]
            ui = np.linalg.solve(interf, g[i])
            n = np.linalg.norm(ui)
            if n <= 0:
                raise InfeasibleTargets(f"user {i}: zero effective channel")
            ui = ui / n
            gain = abs(np.vdot(ui, g[i])) ** 2
            if gain <= 0:
                raise InfeasibleTargets(f"user {i}: zero effective channel gain")
            den = float(np.real(ui.conj() @ interf @ ui))
            new_q[i] = targets.gamma[i] * den / gain
            if new_q[i] > 1e12:
                raise InfeasibleTargets("power fixed point diverged")
            u[i] = ui
            interf = interf + new_q[i] * np.outer(g[i], g[i].conj())
        change = float(np.max(np.abs(new_q - q) / np.maximum(new_q, 1e-300)))
        q = new_q
        if it > 0 and change <= 1e-11:
            break
        if ch.nr > 1:
            v = _downlink_receiver_update(ch, A, u, v, q)
    else:
        raise MaxItersExceeded("power minimization did not converge")
    total = float(sum(ch.sigma2[i] * q[i] for i in range(ch.K)))
    bf = model.BeamformingSolution(
        u=[u[i].reshape(1, -1) for i in range(ch.K)],
        v=[v[i].reshape(1, -1) for i in range(ch.K)],
        q=[np.array([q[i]]) for i in range(ch.K)],
    )
    return total, bf
