"""Broadcast-channel instances and rate/SINR evaluation.

A downlink instance is a :class:`ChannelSet`: per-user channel matrices
``H[i]`` of shape (Nr, Nt), per-user noise powers ``sigma2[i]`` and an
explicit ``encoding_order``.  The user at the first encoding position is
encoded first and therefore sees interference from everyone encoded after it;
in the dual uplink the decode order is the reverse, so that same user is
decoded last and sees no interference.

Rates are natural-log (nats per channel use) throughout the library; the CLI
converts to bits on output.
"""

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import InvalidInput

BC = "bc"
MAC = "mac"


def _as_order(order, K):
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(K)):
        raise InvalidInput(f"encoding_order {order} is not a permutation of 0..{K - 1}")
    return order


@dataclass(frozen=True)
class ChannelSet:
    """A broadcast-channel instance.

    H: list of K channel matrices, each (Nr, Nt), identical shapes.
    sigma2: K positive noise powers (defaults to all ones).
    encoding_order: 0-based permutation; entry m is the user encoded at
        position m.  Defaults to index order.
    """

    H: tuple
    sigma2: np.ndarray
    encoding_order: tuple

    def __init__(self, H, sigma2=None, encoding_order=None):
        mats = tuple(linalg.as_matrix(Hi, name=f"H[{i}]") for i, Hi in enumerate(H))
        if not mats:
            raise InvalidInput("need at least one user channel")
        shape = mats[0].shape
        if any(Hi.shape != shape for Hi in mats):
            raise InvalidInput("all user channels must share one (Nr, Nt) shape")
        K = len(mats)
        if sigma2 is None:
            s2 = np.ones(K)
        else:
            s2 = np.asarray(sigma2, dtype=float).reshape(-1)
            if s2.shape != (K,):
                raise InvalidInput(f"sigma2 must have length {K}")
        if np.any(s2 <= 0) or not np.all(np.isfinite(s2)):
            raise InvalidInput("noise powers must be positive and finite")
        order = _as_order(encoding_order if encoding_order is not None else range(K), K)
        object.__setattr__(self, "H", mats)
        object.__setattr__(self, "sigma2", s2)
        object.__setattr__(self, "encoding_order", order)

    @property
    def K(self):
        return len(self.H)

    @property
    def nr(self):
        return self.H[0].shape[0]

    @property
    def nt(self):
        return self.H[0].shape[1]

    def with_order(self, encoding_order):
        return ChannelSet(self.H, self.sigma2, encoding_order)

    def reversed_order(self):
        return self.with_order(tuple(reversed(self.encoding_order)))


@dataclass(frozen=True)
class LinearConstraint:
    """Transmit covariance constraint tr(Q A) <= P with A PSD and P > 0."""

    A: np.ndarray
    P: float

    def __init__(self, A, P):
        mat = linalg.check_hermitian(A, name="constraint matrix")
        w, _ = np.linalg.eigh(mat)
        if w[0] < -linalg.CLAMP_TOL * max(1.0, w[-1]):
            raise InvalidInput("constraint matrix must be PSD")
        if not (float(P) > 0):
            raise InvalidInput("constraint budget must be positive")
        object.__setattr__(self, "A", mat)
        object.__setattr__(self, "P", float(P))

    @staticmethod
    def sum_power(nt, budget):
        return LinearConstraint(np.eye(nt), budget)

    @staticmethod
    def per_antenna(nt, antenna, budget):
        A = np.zeros((nt, nt))
        A[antenna, antenna] = 1.0
        return LinearConstraint(A, budget)


@dataclass(frozen=True)
class CovarianceSet:
    """Per-user transmit covariances, downlink (Nt x Nt) or uplink (Nr x Nr).

    Matrices are validated Hermitian and PSD; roundoff-negative eigenvalues
    (above -1e-9 relative) are clamped to zero, anything worse raises.
    """

    side: str
    Q: tuple

    def __init__(self, side, Q):
        if side not in (BC, MAC):
            raise InvalidInput(f"side must be '{BC}' or '{MAC}'")
        mats = []
        for i, Qi in enumerate(Q):
            M = linalg.check_hermitian(Qi, name=f"Q[{i}]")
            w, V = np.linalg.eigh(M)
            scale = max(1.0, float(w[-1]))
            if w[0] < -linalg.CLAMP_TOL * scale:
                raise InvalidInput(
                    f"Q[{i}] has eigenvalue {w[0]:g}, below clamp tolerance"
                )
            if w[0] < 0:
                M = (V * np.maximum(w, 0.0)) @ V.conj().T
            mats.append(M)
        if not mats:
            raise InvalidInput("need at least one covariance")
        object.__setattr__(self, "side", side)
        object.__setattr__(self, "Q", tuple(mats))

    @property
    def K(self):
        return len(self.Q)

    def total(self):
        return sum(self.Q[1:], start=self.Q[0].copy()) if self.K > 1 else self.Q[0]

    @staticmethod
    def zeros(side, K, dim):
        return CovarianceSet(side, [np.zeros((dim, dim))] * K)


@dataclass(frozen=True)
class SinrTargets:
    """Per-user positive SINR targets (linear ratios)."""

    gamma: np.ndarray

    def __init__(self, gamma):
        g = np.asarray(gamma, dtype=float).reshape(-1)
        if g.size == 0 or np.any(g <= 0) or not np.all(np.isfinite(g)):
            raise InvalidInput("targets must be positive and finite")
        object.__setattr__(self, "gamma", g)


@dataclass
class BeamformingSolution:
    """Per-stream beamvectors and powers.

    u[i]: (S_i, Nt) unit rows, base-station side vectors (transmit in the
        downlink, receive in the dual uplink).
    v[i]: (S_i, Nr) unit rows, user-side vectors.
    p[i]: downlink stream powers, q[i]: uplink stream powers; either may be
        None before the corresponding side has been populated.
    """

    u: list
    v: list
    p: list = None
    q: list = None

    def __post_init__(self):
        K = len(self.u)
        if len(self.v) != K:
            raise InvalidInput("u and v must list the same number of users")
        for i in range(K):
            self.u[i] = np.atleast_2d(np.asarray(self.u[i], dtype=np.complex128))
            self.v[i] = np.atleast_2d(np.asarray(self.v[i], dtype=np.complex128))
            if self.u[i].shape[0] != self.v[i].shape[0]:
                raise InvalidInput(f"user {i}: u and v stream counts differ")
            for name, mat in (("u", self.u[i]), ("v", self.v[i])):
                norms = np.linalg.norm(mat, axis=1)
                if mat.shape[0] and np.max(np.abs(norms - 1.0)) > 1e-10:
                    raise InvalidInput(f"user {i}: {name} rows must be unit norm")
        for name in ("p", "q"):
            vals = getattr(self, name)
            if vals is None:
                continue
            vals = [np.asarray(x, dtype=float).reshape(-1) for x in vals]
            if len(vals) != K or any(
                v.shape[0] != self.u[i].shape[0] for i, v in enumerate(vals)
            ):
                raise InvalidInput(f"{name} must match stream counts")
            if any(np.any(v < 0) for v in vals):
                raise InvalidInput(f"{name} powers must be nonnegative")
            setattr(self, name, vals)

    @property
    def K(self):
        return len(self.u)

    def streams(self):
        return [ui.shape[0] for ui in self.u]

    def bc_covariances(self):
        """Q_i = sum_j p_ij u_ij u_ij^H (downlink side)."""
        if self.p is None:
            raise InvalidInput("downlink powers not set")
        out = []
        for i in range(self.K):
            nt = self.u[i].shape[1]
            Qi = np.zeros((nt, nt), dtype=np.complex128)
            for j in range(self.u[i].shape[0]):
                uj = self.u[i][j]
                Qi += self.p[i][j] * np.outer(uj, uj.conj())
            out.append(Qi)
        return CovarianceSet(BC, out)

    def mac_covariances(self):
        """Q_i^(m) = sum_j q_ij v_ij v_ij^H (uplink side)."""
        if self.q is None:
            raise InvalidInput("uplink powers not set")
        out = []
        for i in range(self.K):
            nr = self.v[i].shape[1]
            Qi = np.zeros((nr, nr), dtype=np.complex128)
            for j in range(self.v[i].shape[0]):
                vj = self.v[i][j]
                Qi += self.q[i][j] * np.outer(vj, vj.conj())
            out.append(Qi)
        return CovarianceSet(MAC, out)

def mac_eigenbeams(cov, drop_tol=1e-12):
    """Eigendecompose uplink covariances into unit beams and powers.

    Returns (v, q): per-user arrays of eigenvector rows and eigenvalues.
    Zero-power eigenstreams (relative to the largest eigenvalue across users)
    are dropped; they carry no rate and would only inject noise into
    downstream transformations.
    """
    if cov.side != MAC:
        raise InvalidInput("expected an uplink covariance set")
    scale = max(float(np.linalg.eigvalsh(Q)[-1]) for Q in cov.Q)
    v, q = [], []
    nr = cov.Q[0].shape[0]
    for Qi in cov.Q:
        w, V = np.linalg.eigh(Qi)
        keep = w > max(drop_tol * scale, 0.0)
        vi = V[:, keep].T
        v.append(vi if vi.size else np.zeros((0, nr), dtype=np.complex128))
        q.append(w[keep])
    return v, q


def _check_bc_dims(ch, cov):
    if cov.side != BC:
        raise InvalidInput("expected downlink covariances")
    if cov.K != ch.K or any(Q.shape != (ch.nt, ch.nt) for Q in cov.Q):
        raise InvalidInput("covariance dimensions do not match the channel set")


def bc_rates_dpc(ch, cov):
    """Per-user downlink rates (nats) under sequential known-interference
    encoding: the user at encoding position m is interfered only by users at
    positions > m."""
    _check_bc_dims(ch, cov)
    K = ch.K
    rates = np.zeros(K)
    # suffix sums of covariances over encoding positions
    suffix = np.zeros((ch.nt, ch.nt), dtype=np.complex128)
    suffixes = [None] * (K + 1)
    suffixes[K] = suffix
    for m in range(K - 1, -1, -1):
        suffix = suffix + cov.Q[ch.encoding_order[m]]
        suffixes[m] = suffix
    for m in range(K):
        i = ch.encoding_order[m]
        Hi = ch.H[i]
        noise = ch.sigma2[i] * np.eye(ch.nr)
        num = linalg.logdet_psd(noise + Hi @ suffixes[m] @ Hi.conj().T)
        den = linalg.logdet_psd(noise + Hi @ suffixes[m + 1] @ Hi.conj().T)
        rates[i] = num - den
    return rates


def mac_rates(ch, cov, noise):
    """Per-user rates (nats) of the dual uplink with base-station noise
    covariance ``noise``; decode order is the reverse of the encoding order,
    so the user at encoding position m is interfered by positions < m."""
    if cov.side != MAC:
        raise InvalidInput("expected uplink covariances")
    if cov.K != ch.K or any(Q.shape != (ch.nr, ch.nr) for Q in cov.Q):
        raise InvalidInput("covariance dimensions do not match the channel set")
    A = linalg.check_hermitian(noise, name="noise")
    linalg.assert_pd(A, floor=1e-14, name="uplink noise covariance")
    rates = np.zeros(ch.K)
    cum = A.astype(np.complex128)
    prev = linalg.logdet_psd(cum)
    for m in range(ch.K):
        i = ch.encoding_order[m]
        cum = cum + ch.H[i].conj().T @ cov.Q[i] @ ch.H[i]
        cur = linalg.logdet_psd(cum)
        rates[i] = cur - prev
        prev = cur
    return rates


def _stream_order(ch, bf):
    """Global stream sequence in encoding order: (user, stream) pairs."""
    seq = []
    for m in range(ch.K):
        i = ch.encoding_order[m]
        for j in range(bf.u[i].shape[0]):
            seq.append((i, j))
    return seq


def bc_sinr(ch, bf, scheme="dpc"):
    """Per-stream downlink SINRs.

    scheme="dpc": a stream is interfered only by streams encoded after it.
    scheme="linear": every other stream interferes.
    Returns a list of per-user arrays.
    """
    if scheme not in ("dpc", "linear"):
        raise InvalidInput("scheme must be 'dpc' or 'linear'")
    seq = _stream_order(ch, bf)
    gains = {}
    for (i, j) in seq:
        # receive vector of stream (i,j) against every transmit beam
        vij = bf.v[i][j]
        row = {}
        for (k, l) in seq:
            row[(k, l)] = abs(np.vdot(vij, ch.H[i] @ bf.u[k][l])) ** 2
        gains[(i, j)] = row
    out = [np.zeros(bf.u[i].shape[0]) for i in range(ch.K)]
    for pos, (i, j) in enumerate(seq):
        row = gains[(i, j)]
        sig = bf.p[i][j] * row[(i, j)]
        if scheme == "dpc":
            others = seq[pos + 1:]
        else:
            others = [s for s in seq if s != (i, j)]
        interf = sum(bf.p[k][l] * row[(k, l)] for (k, l) in others)
        out[i][j] = sig / (interf + ch.sigma2[i])
    return out


def mac_sinr(ch, bf, noise):
    """Per-stream dual-uplink SINRs: stream (i,j) is decoded after everything
    encoded later, so it sees interference from streams encoded before it
    plus the base-station noise covariance."""
    A = linalg.check_hermitian(noise, name="noise")
    linalg.assert_pd(A, floor=1e-14, name="uplink noise covariance")
    seq = _stream_order(ch, bf)
    out = [np.zeros(bf.u[i].shape[0]) for i in range(ch.K)]
    interf = A.astype(np.complex128)
    for (i, j) in seq:
        uij = bf.u[i][j]
        g = ch.H[i].conj().T @ bf.v[i][j]
        sig = bf.q[i][j] * abs(np.vdot(uij, g)) ** 2
        den = float(np.real(uij.conj() @ interf @ uij))
        out[i][j] = sig / den
        interf = interf + bf.q[i][j] * np.outer(g, g.conj())
    return out


def constraint_value(cov, c):
    """tr((sum_i Q_i) A) for a downlink covariance set; linear in each Q_i."""
    _tot = cov.total()
    if _tot.shape != c.A.shape:
        raise InvalidInput("constraint matrix dimension mismatch")
    return float(np.real(np.trace(_tot @ c.A)))


def bc_mmse_receivers(ch, u, p):
    """Unit-norm MMSE receive vectors for single-stream-per-user downlink
    beams under the DPC interference structure (user at position m interfered
    by positions > m).  u: list of K unit Nt-vectors, p: K powers."""
    K = ch.K
    v = [None] * K
    pos_of = {ch.encoding_order[m]: m for m in range(K)}
    for i in range(K):
        Hi = ch.H[i]
        C = ch.sigma2[i] * np.eye(ch.nr, dtype=np.complex128)
        for k in range(K):
            if pos_of[k] > pos_of[i]:
                g = Hi @ u[k]
                C += p[k] * np.outer(g, g.conj())
        vi = np.linalg.solve(C, Hi @ u[i])
        n = np.linalg.norm(vi)
        v[i] = vi / n if n > 0 else np.eye(ch.nr)[0].astype(np.complex128)
    return v
