"""Coherent-MAC WSN parameter estimation benchmark.

Sensors observe r = H theta + n, precode with a block-diagonal matrix G and
transmit coherently over channel Xi to a fusion center; the estimate is the
received signal itself, with mean-square error

    zeta(G, Xi) = tr( Xi G H R_th H^H G^H Xi^H - Xi G H R_th
                      + Xi G R_nr G^H Xi^H - R_th H^H G^H Xi^H + R_th ).

The optimizer works on the real embedding of the block free variables
(real parts stacked over imaginary parts). zeta is a convex quadratic in
that embedding: zeta(g) = g^T A g - 2 b^T g + q.
"""

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .problem import (
    EllipsoidConstraint,
    LinearProxSurrogate,
    NumericError,
    StochasticProblem,
    SurrogateFn,
    ZeroRegularizer,
)


# ---------------------------------------------------------------------------
# Sensing model
# ---------------------------------------------------------------------------

@dataclass
class SensingModel:
    p: int
    K: int
    n_fc: int
    n_dims: list           # transmit antennas per sensor
    l_dims: list           # observation dims per sensor
    H: np.ndarray          # complex l x p
    R_theta: np.ndarray    # complex p x p
    R_nr: np.ndarray       # complex l x l
    P: float               # total power budget
    Gamma: np.ndarray = field(init=False)
    rows: np.ndarray = field(init=False)   # free var k -> row of G
    cols: np.ndarray = field(init=False)   # free var k -> col of G
    m: int = field(init=False)             # number of complex free variables
    Q_power: np.ndarray = field(init=False)  # real 2m x 2m power form

    def __post_init__(self):
        self.n_dims = [int(v) for v in self.n_dims]
        self.l_dims = [int(v) for v in self.l_dims]
        l = sum(self.l_dims)
        n = sum(self.n_dims)
        if self.H.shape != (l, self.p):
            raise ValueError("H must be l x p")
        if self.p > n:
            raise ValueError("need p <= sum of transmit antennas")
        if self.p != self.n_fc:
            raise ValueError("estimator requires p == n_fc")
        if self.P <= 0:
            raise ValueError("power budget must be positive")
        self.Gamma = self.H @ self.R_theta @ self.H.conj().T + self.R_nr
        ev = np.linalg.eigvalsh(self.Gamma)
        if ev.min() <= 0:
            raise ValueError("Gamma must be positive definite")
        rows, cols = [], []
        roff = coff = 0
        for ni, li in zip(self.n_dims, self.l_dims):
            for b in range(li):
                for a in range(ni):
                    rows.append(roff + a)
                    cols.append(coff + b)
            roff += ni
            coff += li
        self.rows = np.asarray(rows)
        self.cols = np.asarray(cols)
        self.m = len(rows)
        same_row = self.rows[:, None] == self.rows[None, :]
        Qc = same_row * self.Gamma[np.ix_(self.cols, self.cols)].T
        self.Q_power = embed_hermitian(Qc)

    @property
    def l(self):
        return sum(self.l_dims)

    @property
    def n(self):
        return sum(self.n_dims)

    @property
    def real_dim(self):
        return 2 * self.m

    def g_to_matrix(self, r):
        """Real free-variable vector -> complex block-diagonal N x l matrix."""
        g = r[: self.m] + 1j * r[self.m:]
        G = np.zeros((self.n, self.l), dtype=complex)
        G[self.rows, self.cols] = g
        return G

    def matrix_to_g(self, G):
        g = G[self.rows, self.cols]
        return np.concatenate([g.real, g.imag])

    def power(self, r):
        return float(r @ (self.Q_power @ r))

    def power_constraint(self, budget):
        return EllipsoidConstraint(self.Q_power, budget)


def embed_hermitian(A):
    """Hermitian m x m form -> symmetric 2m x 2m real form on [Re; Im]."""
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def embed_vector(b):
    return np.concatenate([b.real, b.imag])


def build_sensing_model(
    p=2, K=2, n_fc=2, n_i=2, l_i=2, power=10.0, noise_db_below_signal=30.0, rng=None
):
    """Random benchmark model: H entries in {+-1 +- 1j}, R_theta = I,
    R_nr scaled so the sensor noise sits ``noise_db_below_signal`` dB below
    the received signal power."""
    if rng is None:
        raise ValueError("an rng is required to draw H")
    n_dims = [n_i] * K if np.isscalar(n_i) else list(n_i)
    l_dims = [l_i] * K if np.isscalar(l_i) else list(l_i)
    l = sum(l_dims)
    H = rng.choice([-1.0, 1.0], size=(l, p)) + 1j * rng.choice([-1.0, 1.0], size=(l, p))
    R_theta = np.eye(p, dtype=complex)
    signal = float(np.trace(H @ R_theta @ H.conj().T).real)
    sigma_n2 = 10.0 ** (-noise_db_below_signal / 10.0) * signal / l
    R_nr = sigma_n2 * np.eye(l, dtype=complex)
    return SensingModel(
        p=p, K=K, n_fc=n_fc, n_dims=n_dims, l_dims=l_dims,
        H=H, R_theta=R_theta, R_nr=R_nr, P=float(power),
    )


# ---------------------------------------------------------------------------
# Channel process
# ---------------------------------------------------------------------------

def random_channel(rng, n_fc, n):
    """I.i.d. circular complex Gaussian channel matrix with per-entry
    variance 1/(n_fc * n), so E||Xi||_F^2 = 1."""
    scale = np.sqrt(1.0 / (2.0 * n_fc * n))
    return scale * (rng.standard_normal((n_fc, n)) + 1j * rng.standard_normal((n_fc, n)))


@dataclass
class ChannelProcess:
    xi0: np.ndarray       # complex n_fc x n base channel
    sigma_c: float

    @classmethod
    def draw(cls, rng, n_fc, n, sigma_c):
        return cls(xi0=random_channel(rng, n_fc, n), sigma_c=float(sigma_c))

    def sample(self, rng):
        nf, n = self.xi0.shape
        if self.sigma_c == 0.0:
            return self.xi0.copy()
        scale = self.sigma_c * np.sqrt(1.0 / (2.0 * nf * n))
        z = scale * (rng.standard_normal((nf, n)) + 1j * rng.standard_normal((nf, n)))
        return self.xi0 + z


def channel_to_xi(Xi):
    v = Xi.ravel(order="F")
    return np.concatenate([v.real, v.imag])


def xi_to_channel(xi, n_fc, n):
    half = n_fc * n
    v = xi[:half] + 1j * xi[half:]
    return v.reshape((n_fc, n), order="F")


# ---------------------------------------------------------------------------
# MSE and its quadratic form
# ---------------------------------------------------------------------------

def mse(model, G, Xi):
    """Direct trace evaluation of zeta(G, Xi); real scalar >= 0."""
    if G.shape != (model.n, model.l) or Xi.shape != (model.n_fc, model.n):
        raise ValueError("shape mismatch in mse")
    XG = Xi @ G
    A1 = XG @ model.H @ model.R_theta @ model.H.conj().T @ XG.conj().T
    A2 = XG @ model.H @ model.R_theta
    A3 = XG @ model.R_nr @ XG.conj().T
    A4 = model.R_theta @ model.H.conj().T @ XG.conj().T
    val = np.trace(A1) - np.trace(A2) + np.trace(A3) - np.trace(A4) + np.trace(model.R_theta)
    if abs(val.imag) > 1e-12 * max(1.0, abs(val.real)):
        raise NumericError(f"mse has non-negligible imaginary part {val.imag}")
    return float(val.real)


@dataclass
class MSEQuadratic:
    """zeta(g) = g^T A g - 2 b^T g + q on the real embedding."""

    A: np.ndarray
    b: np.ndarray
    q: float
    _eig: Optional[tuple] = None

    def value(self, r):
        return float(r @ (self.A @ r) - 2.0 * (self.b @ r) + self.q)

    def gradient(self, r):
        return 2.0 * (self.A @ r - self.b)

    @property
    def eig(self):
        if self._eig is None:
            evals, evecs = np.linalg.eigh(self.A)
            self._eig = (np.clip(evals, 0.0, None), evecs)
        return self._eig

    @property
    def spectral_norm(self):
        return float(self.eig[0].max())


def mse_quadratic_form(model, Xi):
    """Quadratic-form coefficients of zeta over the block free variables."""
    W = Xi.conj().T @ Xi  # n x n Hermitian PSD
    Ac = W[np.ix_(model.rows, model.rows)] * model.Gamma[np.ix_(model.cols, model.cols)].T
    HR = model.H @ model.R_theta  # l x p
    conj_b = np.einsum("kp,pk->k", HR[model.cols, :], Xi[:, model.rows])
    bc = conj_b.conj()
    q = float(np.trace(model.R_theta).real)
    A = embed_hermitian(Ac)
    b = embed_vector(bc)
    evals, evecs = np.linalg.eigh(A)
    scale = max(1.0, float(np.abs(A).max()))
    if evals.min() < -1e-10 * scale:
        raise NumericError(f"MSE quadratic form not PSD (min eig {evals.min()})")
    return MSEQuadratic(A=A, b=b, q=q, _eig=(np.clip(evals, 0.0, None), evecs))


def mse_gradient(model, G, Xi):
    """Gradient of zeta in the real embedding of the free variables."""
    quad = mse_quadratic_form(model, Xi)
    return quad.gradient(model.matrix_to_g(G))


def average_quadratic(quads):
    A = np.mean([qd.A for qd in quads], axis=0)
    b = np.mean([qd.b for qd in quads], axis=0)
    q = float(np.mean([qd.q for qd in quads]))
    return MSEQuadratic(A=A, b=b, q=q)


# ---------------------------------------------------------------------------
# Power-constrained QP (precoder designs of Eqs. 14-15)
# ---------------------------------------------------------------------------

def solve_power_constrained_qp(quads, constraint, tol=1e-12, max_iter=200, x0=None):
    """Minimize the (averaged) convex quadratic over the power ellipsoid.

    Solved exactly: whiten the ellipsoid with Q^{-1/2} (Q is positive
    definite for this benchmark), which turns the problem into a
    norm-ball-constrained convex quadratic, then find the KKT multiplier of
    the whitened problem by bisection on the secular equation. ``x0`` is
    accepted for interface stability and ignored.
    """
    if isinstance(quads, MSEQuadratic):
        quad = quads
    else:
        quad = average_quadratic(list(quads))
    qvals, qvecs = np.linalg.eigh(constraint.Q)
    if qvals.min() <= 0:
        raise NumericError("power form must be positive definite for the QP solver")
    inv_sqrt = qvecs * (1.0 / np.sqrt(qvals))
    A_w = inv_sqrt.T @ quad.A @ inv_sqrt
    b_w = inv_sqrt.T @ quad.b
    evals, evecs = np.linalg.eigh(0.5 * (A_w + A_w.T))
    w = evecs.T @ b_w
    c = constraint.c

    def norm_sq(lam):
        return float(np.sum((w / (evals + lam)) ** 2))

    # interior candidate: pseudo-inverse solution (b is orthogonal to the
    # nullspace of A for this benchmark)
    cutoff = 1e-12 * max(evals.max(), 1.0)
    u0 = np.where(evals > cutoff, w / np.where(evals > cutoff, evals, 1.0), 0.0)
    if float(u0 @ u0) <= c:
        return inv_sqrt @ (evecs @ u0)
    lo, hi = 0.0, max(1.0, float(np.linalg.norm(w)) / np.sqrt(c))
    grow = 0
    while norm_sq(hi) > c:
        hi *= 2.0
        grow += 1
        if grow > 200:
            raise NumericError("QP multiplier bracketing failed")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if norm_sq(mid) > c:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    lam = hi
    u = w / (evals + lam)
    x = inv_sqrt @ (evecs @ u)
    # certify: gradient + 2 lam Q x should vanish at the solution
    kkt = np.linalg.norm(quad.gradient(x) + 2.0 * lam * (constraint.Q @ x))
    if kkt > 1e-6 * max(1.0, float(np.linalg.norm(quad.b))):
        raise NumericError("QP KKT residual too large", best=x, residual=kkt)
    return x


def power_shrink(P, Gamma, eps):
    """Shrunk budget P_tilde = (sqrt(P) - sqrt(||Gamma||_2) * eps)^2.

    Guarantees tr((G+E) Gamma (G+E)^H) <= P whenever tr(G Gamma G^H) <=
    P_tilde and ||E||_F <= eps.
    """
    if P <= 0:
        raise ValueError("P must be positive")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    omega = float(np.linalg.eigvalsh(Gamma).max())
    root = np.sqrt(P) - np.sqrt(omega) * eps
    if root < 0:
        warnings.warn("eps too large for the power budget; shrunk budget clamped to 0")
        return 0.0
    return float(root**2)


# ---------------------------------------------------------------------------
# Instantaneous correction (Eqs. 17-18)
# ---------------------------------------------------------------------------

def correction_from_quad(quad, r, eps, mode="linearized"):
    """Per-slot correction e with ||e|| <= eps, in the real embedding.

    ``linearized``: e = -eps * d / ||d|| with d the MSE gradient at r.
    ``exact``: norm-ball-constrained quadratic minimizer via multiplier
    bisection; also returns the KKT multiplier.
    Returns (e, lam) with lam = None in linearized mode.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0.0:
        return np.zeros_like(np.asarray(r, float)), (0.0 if mode == "exact" else None)
    if mode == "linearized":
        d = quad.gradient(r)
        nd = float(np.linalg.norm(d))
        if nd <= 1e-14:
            return np.zeros_like(r), None
        return -(eps / nd) * d, None
    if mode != "exact":
        raise ValueError(f"unknown correction mode {mode!r}")
    # minimize (r+e)^T A (r+e) - 2 b^T (r+e) over ||e|| <= eps.
    # rhs lies in the range of A for this benchmark, so the interior
    # candidate is the pseudo-inverse solution; otherwise find the KKT
    # multiplier by safeguarded Newton on the secular equation.
    rhs = quad.b - quad.A @ r
    evals, evecs = quad.eig
    w = evecs.T @ rhs
    cutoff = 1e-12 * max(float(evals.max()), 1.0)
    active = evals > cutoff
    w = np.where(active, w, 0.0)
    u0 = np.where(active, w / np.where(active, evals, 1.0), 0.0)
    if float(u0 @ u0) <= eps**2:
        return evecs @ u0, 0.0

    target = eps**2

    def phi_dphi(lam):
        d = evals + lam
        u = w / d
        u2 = u * u
        return float(u2.sum()), float(-2.0 * (u2 / d).sum())

    lam = 0.0
    phi = float(u0 @ u0)
    for _ in range(200):
        if phi - target <= 1e-12 * target:
            break
        _, dphi = phi_dphi(lam)
        lam += (target - phi) / dphi
        phi, _ = phi_dphi(lam)
    else:
        raise NumericError(
            "correction multiplier iteration did not converge",
            best=evecs @ (w / (evals + lam)), residual=phi - target,
        )
    e = evecs @ (w / (evals + lam))
    norm = float(np.linalg.norm(e))
    if norm > eps:
        e *= eps / norm
    return e, lam


def smoothed_correction(quad, r, eps, upsilon):
    """Norm-smoothed steepest-descent correction e = -eps d / sqrt(||d||^2 + upsilon^2).

    This is the correction whose substitution into the MSE produces the
    convex/nonconvex split; the convex-split design deploys it directly.
    """
    if eps < 0 or upsilon <= 0:
        raise ValueError("eps must be nonnegative and upsilon positive")
    d = quad.gradient(r)
    return -(eps / _smooth_norm(d, upsilon)) * d


def instantaneous_correction(model, G, Xi, eps, mode="linearized"):
    """Matrix-level wrapper around :func:`correction_from_quad`."""
    quad = mse_quadratic_form(model, Xi)
    r = model.matrix_to_g(G)
    e, lam = correction_from_quad(quad, r, eps, mode)
    return model.g_to_matrix(e), lam


# ---------------------------------------------------------------------------
# Surrogates (Eqs. 19 and 21)
# ---------------------------------------------------------------------------

def envelope_surrogate(quad, anchor, correction, mu):
    """Linear-plus-prox surrogate whose slope is the MSE gradient at the
    corrected precoder (envelope-theorem gradient in exact mode)."""
    g = quad.gradient(anchor + correction)
    return LinearProxSurrogate(anchor=anchor, grad_anchor=g, mu=mu, offset=quad.value(anchor))


def _smooth_norm(d, upsilon):
    return np.sqrt(float(d @ d) + upsilon**2)


def zeta_bar(quad, r, eps, upsilon):
    """Possibly-nonconvex remainder after substituting the linearized
    correction, with the norm smoothed by upsilon."""
    d = quad.gradient(r)
    n2 = float(d @ d) + upsilon**2
    return eps**2 * float(d @ (quad.A @ d)) / n2 - eps * (np.sqrt(n2) - upsilon)


def zeta_bar_gradient(quad, r, eps, upsilon):
    d = quad.gradient(r)
    n2 = float(d @ d) + upsilon**2
    Ad = quad.A @ d
    dAd = float(d @ Ad)
    grad_wrt_d = eps**2 * (2.0 * Ad * n2 - dAd * 2.0 * d) / n2**2 - eps * d / np.sqrt(n2)
    return 2.0 * (quad.A @ grad_wrt_d)


class ConvexSplitSurrogate(SurrogateFn):
    """Convex quadratic part kept exact; nonconvex remainder linearized."""

    def __init__(self, quad, anchor, eps, upsilon, mu):
        super().__init__(anchor, mu, l_hat=2.0 * quad.spectral_norm + mu)
        self.quad = quad
        self.eps = float(eps)
        self.upsilon = float(upsilon)
        self._zbar = zeta_bar(quad, self.anchor, eps, upsilon)
        self._zbar_grad = zeta_bar_gradient(quad, self.anchor, eps, upsilon)

    def value(self, x):
        d = x - self.anchor
        return (
            self.quad.value(x)
            + self._zbar
            + self._zbar_grad @ d
            + 0.5 * self.mu * (d @ d)
        )

    def gradient(self, x):
        return self.quad.gradient(x) + self._zbar_grad + self.mu * (x - self.anchor)

    def quadratic_model(self):
        H = 2.0 * self.quad.A + self.mu * np.eye(len(self.anchor))
        return H, self.gradient(self.anchor)


def convex_split_surrogate(quad, anchor, eps, upsilon, mu):
    if upsilon <= 0:
        raise ValueError("upsilon must be positive")
    return ConvexSplitSurrogate(quad, np.asarray(anchor, float), eps, upsilon, mu)


# ---------------------------------------------------------------------------
# Hybrid problem assembly (Eq. 16)
# ---------------------------------------------------------------------------

def make_hybrid_problem(
    model, channel, eps, upsilon, variant, mu,
    correction_mode="exact",
):
    """StochasticProblem for the hybrid precoder split G + G_xi.

    The decision variable is the static part in the shrunk power ellipsoid;
    the data samples are channel realizations.
    """
    if variant not in ("envelope", "convex"):
        raise ValueError(f"unknown hybrid variant {variant!r}")
    budget = power_shrink(model.P, model.Gamma, eps)
    if budget <= 0:
        raise ValueError("shrunk power budget is zero; reduce eps")
    constraint = model.power_constraint(budget)
    nf, n = model.n_fc, model.n

    # The same sample is passed to the surrogate and gradient oracles within
    # a slot; memoize the most recent quadratic forms to avoid rebuilding.
    cache = {}

    def quad_of(xi):
        key = xi.tobytes()
        quad = cache.get(key)
        if quad is None:
            quad = mse_quadratic_form(model, xi_to_channel(xi, nf, n))
            if len(cache) > 32:
                cache.clear()
            cache[key] = quad
        return quad

    if variant == "envelope":
        def stoch_grad(x, xi):
            quad = quad_of(xi)
            e, _ = correction_from_quad(quad, x, eps, correction_mode)
            return quad.gradient(x + e)

        def surrogate(x, xi):
            quad = quad_of(xi)
            e, _ = correction_from_quad(quad, x, eps, correction_mode)
            return envelope_surrogate(quad, x, e, mu)

        l_hat = mu
    else:
        def stoch_grad(x, xi):
            quad = quad_of(xi)
            return quad.gradient(x) + zeta_bar_gradient(quad, x, eps, upsilon)

        def surrogate(x, xi):
            return convex_split_surrogate(quad_of(xi), x, eps, upsilon, mu)

        l_hat = 2.0 * mse_quadratic_form(model, channel.xi0).spectral_norm + mu

    L = 2.0 * mse_quadratic_form(model, channel.xi0).spectral_norm

    def sample(rng):
        return channel_to_xi(channel.sample(rng))

    return StochasticProblem(
        dim=model.real_dim,
        sample=sample,
        stoch_grad=stoch_grad,
        surrogate=surrogate,
        constraint=constraint,
        regularizer=ZeroRegularizer(),
        L=max(L, 1e-9),
        mu=mu,
        l_hat=l_hat,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_model(model, path, extra=None):
    """Write a JSON description sufficient to rebuild the model bit-exactly."""
    payload = {
        "p": model.p,
        "K": model.K,
        "n_fc": model.n_fc,
        "n_dims": model.n_dims,
        "l_dims": model.l_dims,
        "H_re": model.H.real.tolist(),
        "H_im": model.H.imag.tolist(),
        "R_theta_re": model.R_theta.real.tolist(),
        "R_nr_re": model.R_nr.real.tolist(),
        "P": model.P,
    }
    if extra:
        payload["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    H = np.asarray(payload["H_re"], float) + 1j * np.asarray(payload["H_im"], float)
    R_theta = np.asarray(payload["R_theta_re"], float).astype(complex)
    R_nr = np.asarray(payload["R_nr_re"], float).astype(complex)
    model = SensingModel(
        p=payload["p"], K=payload["K"], n_fc=payload["n_fc"],
        n_dims=payload["n_dims"], l_dims=payload["l_dims"],
        H=H, R_theta=R_theta, R_nr=R_nr, P=payload["P"],
    )
    return model, payload.get("extra")
