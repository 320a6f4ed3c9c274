"""Self-contained numerical correctness suite behind the ``check`` command.

Each check runs on seeded instances and returns (name, passed, detail).
The suite covers: surrogate tangency, analytic gradients against central
differences, projection KKT and idempotence, the shrunk-budget power
guarantee, anchor-log invariants of asynchronous runs, the tracker
steady-state bound with a frozen iterate, the tracker update identity,
and the stability of the aggregate CSV header.
"""

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod, wsn
from .experiment import ExperimentConfig, aggregate_header
from .harness import DelayModel, run_asynchronous
from .optimizer import HyperParams, build_combined_surrogate, update_tracker
from .problem import project_ellipsoid
from .quadratic import make_quadratic_problem

CHECK_SEED = 7041776

GOLDEN_AGGREGATE_HEADER = [
    "t",
    "instantaneous_mean", "instantaneous_se",
    "static_hindsight_mean", "static_hindsight_se",
    "hybrid_envelope_async_mean", "hybrid_envelope_async_se",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _central_diff(fn, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return g


def _rel_err(approx, exact):
    return float(np.linalg.norm(approx - exact) / max(1.0, np.linalg.norm(exact)))


def _test_setup():
    rng = rngmod.stream(CHECK_SEED, "model")
    model = wsn.build_sensing_model(rng=rng)
    channel = wsn.ChannelProcess.draw(rng, model.n_fc, model.n, 0.05)
    return rng, model, channel


def check_tangent_conditions(n_anchors=100):
    """Surrogate gradient equals the stochastic gradient at the anchor."""
    from .problem import check_tangent

    rng, model, channel = _test_setup()
    worst = 0.0
    problems = [
        make_quadratic_problem(n=20, sigma=1.0, rng=rng),
        wsn.make_hybrid_problem(model, channel, 0.05, 1e-4, "envelope", 0.2),
        wsn.make_hybrid_problem(model, channel, 0.02, 1e-4, "convex", 0.01),
    ]
    for problem in problems:
        for _ in range(n_anchors):
            x = problem.constraint.project(0.3 * rng.standard_normal(problem.dim))
            xi = problem.sample(rng)
            worst = max(worst, check_tangent(problem, x, xi))
    ok = worst <= 1e-10
    return CheckResult("tangent-condition", ok, f"max residual {worst:.3e}")


def check_gradients(perturb=0.0):
    """Analytic gradients against central differences, rel. err <= 1e-4.

    ``perturb`` scales the analytic gradients by (1 + perturb) so the
    check's sensitivity can itself be exercised.
    """
    rng, model, channel = _test_setup()
    worst = 0.0
    scale = 1.0 + perturb
    for _ in range(20):
        Xi = channel.sample(rng)
        quad = wsn.mse_quadratic_form(model, Xi)
        r = 0.3 * rng.standard_normal(model.real_dim)
        worst = max(worst, _rel_err(scale * quad.gradient(r), _central_diff(quad.value, r)))
        worst = max(
            worst,
            _rel_err(
                scale * wsn.zeta_bar_gradient(quad, r, 0.05, 1e-4),
                _central_diff(lambda z: wsn.zeta_bar(quad, z, 0.05, 1e-4), r),
            ),
        )
        sur = wsn.convex_split_surrogate(quad, r, 0.02, 1e-4, 0.01)
        z = r + 0.1 * rng.standard_normal(model.real_dim)
        worst = max(worst, _rel_err(scale * sur.gradient(z), _central_diff(sur.value, z)))
    problem = make_quadratic_problem(n=20, sigma=1.0, rng=rng)
    xi = problem.sample(rng)
    x = rng.standard_normal(20)
    worst = max(
        worst,
        _rel_err(
            scale * problem.stoch_grad(x, xi),
            _central_diff(lambda z: _quad_value(problem, z, xi), x),
        ),
    )
    ok = worst <= 1e-4
    return CheckResult("gradient-finite-difference", ok, f"max rel err {worst:.3e}")


def _quad_value(problem, x, xi):
    # f(x, xi) = 0.5 ||x - x_star + xi||^2 up to a constant; recover x_star
    # from the gradient at zero.
    x_star_minus_xi = -problem.stoch_grad(np.zeros(problem.dim), xi)
    d = x - x_star_minus_xi
    return 0.5 * float(d @ d)


def check_projection(n_trials=50):
    """KKT residual <= 1e-10 and idempotence <= 1e-12 on random ellipsoids."""
    rng = rngmod.stream(CHECK_SEED, "projection")
    worst_kkt = worst_idem = 0.0
    for _ in range(n_trials):
        n = int(rng.integers(2, 12))
        A = rng.standard_normal((n, n))
        Q = A @ A.T + 0.1 * np.eye(n)
        c = float(rng.uniform(0.5, 5.0))
        x = 3.0 * rng.standard_normal(n)
        z = project_ellipsoid(Q, c, x)
        val = float(z @ (Q @ z))
        if val < c * (1.0 - 1e-9) and not np.allclose(z, x):
            return CheckResult("projection-kkt", False, "interior output differs from input")
        if val > c * (1.0 + 1e-9):
            return CheckResult("projection-kkt", False, f"infeasible output {val} > {c}")
        if not np.allclose(z, x):
            # KKT: x - z = lam * Q z for some lam >= 0
            qz = Q @ z
            lam = float((x - z) @ qz) / max(float(qz @ qz), 1e-300)
            kkt = np.linalg.norm(x - z - lam * qz) / max(1.0, np.linalg.norm(x))
            worst_kkt = max(worst_kkt, kkt, abs(val - c) / max(1.0, c))
        z2 = project_ellipsoid(Q, c, z)
        worst_idem = max(worst_idem, float(np.linalg.norm(z2 - z)))
    ok = worst_kkt <= 1e-10 and worst_idem <= 1e-12
    return CheckResult(
        "projection-kkt-idempotence", ok,
        f"max KKT {worst_kkt:.3e}, max idempotence drift {worst_idem:.3e}",
    )


def check_power_guarantee(n_trials=10000):
    """Shrunk budget + bounded correction never exceeds the true budget."""
    rng, model, _ = _test_setup()
    violations = 0
    shrunk_cache = {}
    for _ in range(n_trials):
        eps = float(rng.uniform(0.01, 0.3))
        if eps not in shrunk_cache:
            shrunk_cache[eps] = wsn.power_shrink(model.P, model.Gamma, eps)
        budget = shrunk_cache[eps]
        r = rng.standard_normal(model.real_dim)
        constraint = model.power_constraint(budget)
        r = constraint.project(5.0 * r)
        e = rng.standard_normal(model.real_dim)
        e *= rng.uniform(0.0, 1.0) * eps / np.linalg.norm(e)
        if model.power(r + e) > model.P * (1.0 + 1e-12):
            violations += 1
    return CheckResult("power-guarantee", violations == 0, f"{violations} violations")


def check_anchor_logs(n_runs=100):
    """Anchor-log invariants on seeded asynchronous runs."""
    from .harness import validate_anchor_log

    failures = 0
    for i in range(n_runs):
        rng = rngmod.stream(CHECK_SEED, "anchors", i)
        problem = make_quadratic_problem(n=5, sigma=1.0, rng=rng)
        cores = int(rng.integers(1, 6))
        hi = int(rng.integers(1, 6))
        delay = DelayModel.uniform(1, hi)
        T = int(rng.integers(10, 60))
        hyper = HyperParams(gamma=0.05, rho=0.05, mu=1.0, tau=cores * hi)
        x1 = problem.constraint.project(rng.standard_normal(5))
        _, anchor_log = run_asynchronous(
            problem, hyper, cores, delay, T, x1, rng=rng, rng_delays=rng
        )
        if not validate_anchor_log(anchor_log, cores, cores * hi):
            failures += 1
    return CheckResult("anchor-log-invariants", failures == 0, f"{failures}/{n_runs} failed")


def check_tracker_steady_state(rhos=(0.01, 0.1), sigma=1.0):
    """Frozen-iterate tracker variance stays below 3 rho sigma^2.

    With x held fixed, the tracker recursion has steady-state mean squared
    error rho sigma^2 / (2 - rho); the factor-3 margin absorbs Monte Carlo
    noise.
    """
    rng = rngmod.stream(CHECK_SEED, "tracker")
    problem = make_quadratic_problem(n=20, sigma=sigma, rng=rng)
    worst_ratio = 0.0
    for rho in rhos:
        x = problem.constraint.project(rng.standard_normal(20))
        g_true = problem.stoch_grad(x, np.zeros(20))
        y = problem.stoch_grad(x, problem.sample(rng))
        burn = int(20 / rho)
        horizon = burn + int(100 / rho)
        acc = 0.0
        count = 0
        for t in range(horizon):
            y = update_tracker(y, problem.stoch_grad(x, problem.sample(rng)), rho)
            if t >= burn:
                d = y - g_true
                acc += float(d @ d)
                count += 1
        mse = acc / count
        worst_ratio = max(worst_ratio, mse / (rho * sigma**2))
    ok = worst_ratio <= 3.0
    return CheckResult(
        "tracker-steady-state", ok, f"max MSE / (rho sigma^2) = {worst_ratio:.3f}"
    )


def check_tracker_identity(n_trials=50):
    """grad f_tilde(x_t) equals the next tracker value y_{t+1}."""
    rng = rngmod.stream(CHECK_SEED, "identity")
    problem = make_quadratic_problem(n=20, sigma=1.0, rng=rng)
    worst = 0.0
    for _ in range(n_trials):
        x = rng.standard_normal(20)
        y = rng.standard_normal(20)
        xi = problem.sample(rng)
        rho, mu = float(rng.uniform(0.01, 1.0)), float(rng.uniform(0.1, 2.0))
        comb = build_combined_surrogate(x, y, problem.surrogate(x, xi), rho, mu)
        y_next = update_tracker(y, problem.stoch_grad(x, xi), rho)
        worst = max(worst, float(np.linalg.norm(comb.gradient(x) - y_next)))
    ok = worst <= 1e-12
    return CheckResult("tracker-update-identity", ok, f"max deviation {worst:.3e}")


def check_quadratic_form_consistency(n_trials=30):
    """Quadratic-form MSE equals the direct trace evaluation to 1e-10 rel."""
    rng, model, channel = _test_setup()
    worst = 0.0
    for _ in range(n_trials):
        Xi = channel.sample(rng)
        quad = wsn.mse_quadratic_form(model, Xi)
        r = rng.standard_normal(model.real_dim)
        direct = wsn.mse(model, model.g_to_matrix(r), Xi)
        form = quad.value(r)
        worst = max(worst, abs(direct - form) / max(1.0, abs(direct)))
    ok = worst <= 1e-10
    return CheckResult("mse-quadratic-form", ok, f"max rel deviation {worst:.3e}")


def check_channel_statistics(n_draws=2000):
    """Base-channel norm near 1 on average; perturbation RMS matches sigma_c."""
    rng = rngmod.stream(CHECK_SEED, "channel")
    sigma_c = 0.05
    norms, dev_sq = [], []
    for _ in range(n_draws):
        ch = wsn.ChannelProcess.draw(rng, 2, 4, sigma_c)
        norms.append(np.linalg.norm(ch.xi0))
        Xi = ch.sample(rng)
        dev_sq.append(np.linalg.norm(Xi - ch.xi0) ** 2)
    mean_norm = float(np.mean(norms))
    rms_dev = float(np.sqrt(np.mean(dev_sq)))
    ok = 0.95 <= mean_norm <= 1.05 and 0.04 <= rms_dev <= 0.06
    return CheckResult(
        "channel-statistics", ok,
        f"mean base norm {mean_norm:.4f}, perturbation RMS {rms_dev:.4f}",
    )


def check_csv_header():
    """Aggregate CSV column layout is stable for the default configuration."""
    cfg = ExperimentConfig()
    header = aggregate_header(cfg.series_names())
    ok = header == GOLDEN_AGGREGATE_HEADER
    return CheckResult("aggregate-csv-header", ok, ",".join(header))


def run_all_checks(gradient_perturb=0.0):
    return [
        check_tangent_conditions(),
        check_gradients(perturb=gradient_perturb),
        check_projection(),
        check_power_guarantee(),
        check_anchor_logs(),
        check_tracker_steady_state(),
        check_tracker_identity(),
        check_quadratic_form_consistency(),
        check_channel_statistics(),
        check_csv_header(),
    ]


def report(results, out=print):
    all_ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        all_ok = all_ok and r.passed
        out(f"{status} {r.name}: {r.detail}")
    out("all checks passed" if all_ok else "some checks FAILED")
    return 0 if all_ok else 1
