"""Per-iteration math: surrogate mixing, subproblem solves, diagnostics.

Implements the combined surrogate

    f_tilde(x) = rho * f_hat(x, x_t, xi_t) + (1 - rho) <y_t, x>
                 + (1 - rho) (mu / 2) ||x - x_t||^2

its constrained minimization, the mixing updates

    x_{t+1} = (1 - gamma) x_t + gamma x_hat
    y_{t+1} = (1 - rho) y_t + rho grad f(x_t, xi_t)

the prox-SGD baseline, the step-size feasibility constant C_mu, and the
stationarity residual used for complexity diagnostics.
"""

from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .problem import (
    ContractError,
    EllipsoidConstraint,
    NumericError,
    Unconstrained,
    ZeroRegularizer,
    estimate_true_gradient,
)


@dataclass
class HyperParams:
    gamma: float
    rho: float
    mu: float
    tau: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")


@dataclass
class OptimizerState:
    t: int
    x: np.ndarray
    y: np.ndarray


class CombinedSurrogate:
    """rho-weighted mix of the instantaneous surrogate, tracker term and prox."""

    def __init__(self, x_t, y_t, base, rho, mu):
        self.x_t = np.asarray(x_t, dtype=float)
        self.y_t = np.asarray(y_t, dtype=float)
        self.base = base
        self.rho = float(rho)
        self.mu = float(mu)
        # Moduli of the mixed objective.
        self.modulus = rho * base.mu + (1.0 - rho) * mu
        self.smoothness = rho * base.l_hat + (1.0 - rho) * mu

    def value(self, x):
        d = x - self.x_t
        return (
            self.rho * self.base.value(x)
            + (1.0 - self.rho) * (self.y_t @ x)
            + (1.0 - self.rho) * 0.5 * self.mu * (d @ d)
        )

    def gradient(self, x):
        return (
            self.rho * self.base.gradient(x)
            + (1.0 - self.rho) * self.y_t
            + (1.0 - self.rho) * self.mu * (x - self.x_t)
        )


def build_combined_surrogate(x_t, y_t, f_hat, rho, mu):
    x_t = np.asarray(x_t, dtype=float)
    y_t = np.asarray(y_t, dtype=float)
    if x_t.shape != y_t.shape:
        raise ContractError("iterate/tracker dimension mismatch")
    if f_hat.anchor.shape != x_t.shape or not np.array_equal(f_hat.anchor, x_t):
        raise ContractError("surrogate anchor does not match the current iterate")
    return CombinedSurrogate(x_t, y_t, f_hat, rho, mu)


def solve_subproblem(s, h, X, tol=1e-8, max_iter=10000):
    """argmin_{x in X} h(x) + f_tilde(x).

    Uses the closed form when the base surrogate is linear-plus-prox and
    h == 0 (the minimizer is then a single projection); otherwise projected
    proximal gradient with step 1/smoothness, stopping when the gradient
    mapping norm falls below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    h_zero = getattr(h, "is_zero", False)
    if s.base.is_linear_prox and h_zero:
        c = s.rho * s.base.grad_anchor + (1.0 - s.rho) * s.y_t
        return X.project(s.x_t - c / s.modulus)

    qm = s.base.quadratic_model() if h_zero else None
    if qm is not None:
        # the combined objective is itself a strongly convex quadratic:
        # Hessian M = rho H + (1 - rho) mu I, gradient g_t at the anchor
        H, _ = qm
        M = s.rho * H
        M[np.diag_indices_from(M)] += (1.0 - s.rho) * s.mu
        g_t = s.gradient(s.x_t)
        if isinstance(X, Unconstrained):
            return s.x_t - np.linalg.solve(M, g_t)
        if isinstance(X, EllipsoidConstraint):
            from .wsn import MSEQuadratic, solve_power_constrained_qp

            quad = MSEQuadratic(A=0.5 * M, b=0.5 * (M @ s.x_t - g_t), q=0.0)
            return solve_power_constrained_qp(quad, X)

    step = 1.0 / s.smoothness
    x = s.x_t.copy()
    for _ in range(max_iter):
        x_next = X.project(h.prox(x - step * s.gradient(x), step))
        res = np.linalg.norm(x - x_next) / step
        x = x_next
        if res <= tol:
            return x
    raise NumericError("subproblem solver iteration cap exceeded", best=x, residual=res)


def update_iterate(x_t, x_hat, gamma):
    """x_{t+1} = (1 - gamma) x_t + gamma x_hat."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    return (1.0 - gamma) * x_t + gamma * x_hat


def update_tracker(y_t, g_t, rho):
    """y_{t+1} = (1 - rho) y_t + rho g_t."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    y_t = np.asarray(y_t, dtype=float)
    g_t = np.asarray(g_t, dtype=float)
    if y_t.shape != g_t.shape:
        raise ContractError("tracker/gradient dimension mismatch")
    return (1.0 - rho) * y_t + rho * g_t


def prox_sgd_step(x_t, g_t, eta, h, X):
    """One prox-SGD update: minimizer of h(x) + <g,x> + ||x-x_t||^2/(2 eta) over X."""
    if eta <= 0:
        raise ValueError("step size eta must be positive")
    return X.project(h.prox(x_t - eta * g_t, eta))


def stationarity_residual(
    problem, x_hat, x_anchor, y_anchor, xi_anchor, rho, mu, B, rng, tol=1e-8
):
    """Single-sample stationarity estimate ||v_bar + grad_hat F(x_hat)||^2.

    ``v_bar`` is the subdifferential element certified by the subproblem
    optimality condition; ``grad_hat F`` is a B-sample Monte Carlo estimate.
    """
    f_hat = problem.surrogate(np.asarray(x_anchor, float), xi_anchor)
    v_bar = -(
        (1.0 - rho) * np.asarray(y_anchor, float)
        + (1.0 - rho) * mu * (x_hat - x_anchor)
        + rho * f_hat.gradient(x_hat)
    )
    unconstrained = getattr(problem.constraint, "is_unconstrained", False)
    h_zero = getattr(problem.regularizer, "is_zero", False)
    if unconstrained and h_zero and np.linalg.norm(v_bar) > 100.0 * tol:
        raise ContractError(
            "stale inputs: x_hat fails the unconstrained subproblem optimality check"
        )
    grad_hat = estimate_true_gradient(problem, x_hat, B, rng)
    r = v_bar + grad_hat
    return float(r @ r)


HyperCheck = namedtuple("HyperCheck", ["c_mu", "ok"])


def validate_hyperparams(L, l_hat, mu, gamma, rho, tau):
    """Step-size feasibility constant C_mu; updates contract only when C_mu > 0."""
    if L <= 0 or l_hat <= 0 or mu <= 0 or gamma <= 0 or rho <= 0 or tau < 0:
        raise ValueError("all moduli and steps must be positive, tau nonnegative")
    c_l = L**2 + (l_hat**2) * rho**2 + mu**2
    c_mu = mu - gamma * L / 2.0 - (1.0 + L**2) * gamma / rho - (tau**2) * rho * gamma * c_l
    return HyperCheck(c_mu=float(c_mu), ok=bool(c_mu > 0))


def rate_regime_check(T, L, l_hat, tau):
    """Feasibility gate for the diminishing-step regime gamma = rho = 1/sqrt(T).

    With gamma = rho the mixing penalty (1 + L^2) * gamma / rho is a fixed
    constant independent of T; it scales the convergence rate but cannot be
    driven to zero, so it is absorbed into the rate constant rather than
    treated as a feasibility blocker. What must actually vanish for the
    bound to be meaningful are the step and delay terms, giving the
    asymptotic constant

        c_mu = mu - gamma * L / 2 - tau**2 * rho * gamma * C_L

    evaluated at mu = L, together with the growth conditions tau < sqrt(T)
    and l_hat <= sqrt(T).
    """
    if T < 1 or L <= 0 or l_hat <= 0 or tau < 0:
        raise ValueError("need T >= 1, positive moduli, tau nonnegative")
    step = 1.0 / np.sqrt(T)
    mu = L
    c_l = L**2 + (l_hat**2) * step**2 + mu**2
    c_mu = mu - step * L / 2.0 - (tau**2) * step * step * c_l
    ok = c_mu > 0 and tau < np.sqrt(T) and l_hat <= np.sqrt(T)
    return HyperCheck(c_mu=float(c_mu), ok=bool(ok))
