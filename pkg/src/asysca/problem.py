"""Stochastic composite problem oracles and shared geometric primitives.

The decision variable is always a dense real vector; complex quantities are
embedded by stacking real and imaginary parts before they reach this layer.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class ContractError(ValueError):
    """An oracle or operation was called outside its contract."""


class NumericError(RuntimeError):
    """An iterative routine failed to converge; carries the best iterate."""

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


# ---------------------------------------------------------------------------
# Regularizers
# ---------------------------------------------------------------------------

class ZeroRegularizer:
    """h == 0; prox is the identity."""

    is_zero = True

    def value(self, x):
        return 0.0

    def prox(self, x, step):
        return x


# ---------------------------------------------------------------------------
# Constraint sets
# ---------------------------------------------------------------------------

class Unconstrained:
    kind = "unconstrained"
    is_unconstrained = True

    def membership(self, x):
        return True

    def project(self, x):
        return x


class EllipsoidConstraint:
    """Closed convex set {x : x^T Q x <= c} with Q symmetric PSD, c > 0.

    The eigendecomposition of Q is computed once at construction and reused
    by every projection.
    """

    kind = "ellipsoid"
    is_unconstrained = False

    def __init__(self, Q, c):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be a square matrix")
        if not np.allclose(Q, Q.T, atol=1e-10):
            raise ValueError("Q must be symmetric")
        if c <= 0:
            raise ValueError("ellipsoid budget c must be positive")
        evals, evecs = np.linalg.eigh(0.5 * (Q + Q.T))
        if evals.min() < -1e-10 * max(1.0, abs(evals).max()):
            raise ValueError("Q must be positive semidefinite")
        self.Q = Q
        self.c = float(c)
        self._evals = np.clip(evals, 0.0, None)
        self._evecs = evecs

    def quad(self, x):
        return float(x @ (self.Q @ x))

    def membership(self, x):
        return self.quad(x) <= self.c * (1.0 + 1e-9)

    def project(self, x, tol=1e-12):
        return _project_eig(self._evals, self._evecs, self.c, np.asarray(x, float), tol)


def _project_eig(evals, evecs, c, x, tol):
    xt = evecs.T @ x
    val = float((evals * xt) @ xt)
    if val <= c:
        return x

    # Solve phi(lam) = c for the KKT multiplier. phi is convex and
    # decreasing, so Newton from 0 increases monotonically towards the root
    # while staying on the infeasible side (phi >= c).
    def phi_dphi(lam):
        d = 1.0 + lam * evals
        z = xt / d
        qz2 = evals * z * z
        return float(qz2.sum()), float(-2.0 * (qz2 * evals / d).sum())

    lam = 0.0
    phi = val
    for _ in range(100):
        if phi - c <= tol * max(1.0, c):
            break
        _, dphi = phi_dphi(lam)
        lam += (c - phi) / dphi
        phi, _ = phi_dphi(lam)
    else:
        raise NumericError(
            "ellipsoid projection multiplier iteration did not converge",
            best=evecs @ (xt / (1.0 + lam * evals)),
            residual=phi - c,
        )
    z = xt / (1.0 + lam * evals)
    if phi > c:
        # Land exactly on the boundary so membership and idempotence hold.
        z *= np.sqrt(c / phi)
    return evecs @ z


def project_ellipsoid(Q, c, x, tol=1e-12):
    """Euclidean projection onto {z : z^T Q z <= c}.

    Solved by bisection on the Lagrange multiplier in the eigenbasis of Q.
    Returns ``x`` unchanged when it is already feasible.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    Q = np.asarray(Q, dtype=float)
    if not np.allclose(Q, Q.T, atol=1e-10):
        raise ValueError("Q must be symmetric")
    evals, evecs = np.linalg.eigh(0.5 * (Q + Q.T))
    if evals.min() < -1e-10 * max(1.0, abs(evals).max()):
        raise ValueError("Q must be positive semidefinite")
    return _project_eig(np.clip(evals, 0.0, None), evecs, float(c), np.asarray(x, float), tol)


# ---------------------------------------------------------------------------
# Surrogates
# ---------------------------------------------------------------------------

class SurrogateFn:
    """Strongly convex model of f anchored at a point, sharing its gradient there.

    Subclasses provide ``value`` and ``gradient``; ``mu`` is the strong
    convexity modulus and ``l_hat`` the smoothness modulus.
    """

    is_linear_prox = False

    def __init__(self, anchor, mu, l_hat):
        self.anchor = np.asarray(anchor, dtype=float)
        self.mu = float(mu)
        self.l_hat = float(l_hat)

    def quadratic_model(self):
        """(H, g) with gradient(x) = g + H (x - anchor), or None.

        Surrogates with an affine gradient can expose their Hessian here;
        constrained subproblems over an ellipsoid are then solved exactly
        instead of by projected gradient.
        """
        return None

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError


class LinearProxSurrogate(SurrogateFn):
    """f_hat(x) = offset + <g, x - a> + (mu/2) ||x - a||^2."""

    is_linear_prox = True

    def __init__(self, anchor, grad_anchor, mu, offset=0.0):
        super().__init__(anchor, mu, l_hat=mu)
        self.grad_anchor = np.asarray(grad_anchor, dtype=float)
        if self.grad_anchor.shape != self.anchor.shape:
            raise ContractError("surrogate gradient/anchor dimension mismatch")
        self.offset = float(offset)

    def value(self, x):
        d = x - self.anchor
        return self.offset + self.grad_anchor @ d + 0.5 * self.mu * (d @ d)

    def gradient(self, x):
        return self.grad_anchor + self.mu * (x - self.anchor)


# ---------------------------------------------------------------------------
# Problem bundle
# ---------------------------------------------------------------------------

@dataclass
class StochasticProblem:
    """Oracle bundle for min_{x in X} E[f(x, xi)] + h(x).

    ``stoch_grad`` and ``surrogate`` must be pure functions of their inputs.
    """

    dim: int
    sample: Callable          # rng -> xi (1-D array)
    stoch_grad: Callable      # (x, xi) -> gradient
    surrogate: Callable       # (anchor, xi) -> SurrogateFn
    constraint: object = field(default_factory=Unconstrained)
    regularizer: object = field(default_factory=ZeroRegularizer)
    L: float = 1.0
    mu: float = 1.0
    l_hat: float = 1.0
    sigma: Optional[float] = None
    objective: Optional[Callable] = None   # x -> U(x), exact when available

    def __post_init__(self):
        if self.L <= 0 or self.mu <= 0 or self.l_hat <= 0:
            raise ValueError("L, mu, l_hat must be positive")


def check_tangent(problem, x, xi):
    """Norm of grad f_hat(x, x, xi) - grad f(x, xi); 0 for a valid surrogate."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dim,):
        raise ContractError("decision vector has wrong dimension")
    s = problem.surrogate(x, xi)
    g_sur = s.gradient(x)
    g = problem.stoch_grad(x, xi)
    if g_sur.shape != g.shape:
        raise ContractError("surrogate gradient dimension mismatch")
    return float(np.linalg.norm(g_sur - g))


def estimate_true_gradient(problem, x, B, rng):
    """Monte Carlo estimate of grad F(x) from B fresh i.i.d. samples."""
    if B < 1:
        raise ValueError("B must be >= 1")
    acc = np.zeros(problem.dim)
    for _ in range(B):
        acc += problem.stoch_grad(x, problem.sample(rng))
    return acc / B
