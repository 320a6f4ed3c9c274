"""Synthetic strongly convex quadratic benchmark.

F(x) = 0.5 ||x - x_star||^2 with additive Gaussian gradient noise:
grad f(x, xi) = x - x_star + xi, xi ~ N(0, (sigma^2 / n) I). The exact
objective and true gradient are exposed so convergence and complexity
diagnostics can be checked against closed forms.
"""

import numpy as np

from .problem import (
    EllipsoidConstraint,
    LinearProxSurrogate,
    StochasticProblem,
    Unconstrained,
)


def make_quadratic_problem(n=20, sigma=0.0, x_star=None, constrained=True, rng=None):
    """Problem bundle for the noisy quadratic.

    When ``constrained`` the feasible set is the centered ball of radius
    ||x_star|| + 1, which contains the optimum strictly in its interior.
    ``x_star`` defaults to a fixed unit-norm-ish target drawn from ``rng``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if x_star is None:
        if rng is None:
            raise ValueError("provide x_star or an rng to draw it")
        x_star = rng.standard_normal(n)
    x_star = np.asarray(x_star, dtype=float)
    if x_star.shape != (n,):
        raise ValueError("x_star has wrong dimension")
    noise_scale = sigma / np.sqrt(n)

    def sample(gen):
        return noise_scale * gen.standard_normal(n)

    def stoch_grad(x, xi):
        return x - x_star + xi

    def surrogate(anchor, xi):
        return LinearProxSurrogate(
            anchor=anchor,
            grad_anchor=stoch_grad(anchor, xi),
            mu=1.0,
            offset=objective(anchor),
        )

    def objective(x):
        d = x - x_star
        return 0.5 * float(d @ d)

    if constrained:
        radius = float(np.linalg.norm(x_star)) + 1.0
        constraint = EllipsoidConstraint(np.eye(n), radius**2)
    else:
        constraint = Unconstrained()

    return StochasticProblem(
        dim=n,
        sample=sample,
        stoch_grad=stoch_grad,
        surrogate=surrogate,
        constraint=constraint,
        L=1.0,
        mu=1.0,
        l_hat=1.0,
        sigma=sigma,
        objective=objective,
    )


def true_gradient(problem, x):
    """Exact grad F for problems built by :func:`make_quadratic_problem`."""
    zero = np.zeros(problem.dim)
    return problem.stoch_grad(np.asarray(x, float), zero)
