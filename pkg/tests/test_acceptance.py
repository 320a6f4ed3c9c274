"""Acceptance suite: one test per primary criterion, desk scale.

Each test prints a single pass/fail line (visible with ``pytest -s`` or on
failure). The WSN Monte Carlo experiment (criteria 4 and 5) and its timing
are shared through a module-scoped fixture so the 50-run evaluation is
performed once.
"""

import time

import numpy as np
import pytest

from asysca.checks import run_all_checks
from asysca.experiment import ExperimentConfig, quadratic_benchmark, run_experiment, run_sweep
from asysca.harness import DelayModel, Diagnostics, run_asynchronous, run_synchronous_genie
from asysca.optimizer import HyperParams, rate_regime_check, validate_hyperparams
from asysca.quadratic import make_quadratic_problem


def _report(name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _paired_gap(result, better, worse):
    """Mean and SE of the per-run final-window difference worse - better."""
    T = result.config.T
    lo = T - 50
    a = result.series[better][:, lo:].mean(axis=1)
    b = result.series[worse][:, lo:].mean(axis=1)
    d = b - a
    return float(d.mean()), float(d.std(ddof=1) / np.sqrt(len(d)))


@pytest.fixture(scope="module")
def wsn_experiment():
    cfg = ExperimentConfig(
        variants=("instantaneous", "static_hindsight", "hybrid_envelope"),
        modes=("async", "genie", "practical"),
    )
    t0 = time.monotonic()
    result = run_experiment(cfg)
    elapsed = time.monotonic() - t0
    return result, elapsed


def test_criterion_1_genie_equivalence():
    # single core, unit service time: byte-identical trajectory CSVs
    rng = np.random.default_rng(101)
    problem = make_quadratic_problem(n=20, sigma=1.0, rng=rng)
    T = 1000
    samples = [problem.sample(np.random.default_rng(5000 + i)) for i in range(T)]
    hyper = HyperParams(gamma=0.05, rho=0.05, mu=1.0, tau=1)
    x1 = np.zeros(20)
    t0 = time.monotonic()
    diag_a = Diagnostics(interval=25, B=10, rng=np.random.default_rng(7))
    diag_b = Diagnostics(interval=25, B=10, rng=np.random.default_rng(7))
    genie = run_synchronous_genie(problem, hyper, T, x1, samples=samples, diag=diag_a)
    asyn, _ = run_asynchronous(
        problem, hyper, 1, DelayModel.deterministic(1), T, x1,
        samples=samples, rng_delays=np.random.default_rng(0), diag=diag_b,
    )
    elapsed = time.monotonic() - t0
    same = genie.to_csv_bytes() == asyn.to_csv_bytes()
    _report(
        "criterion 1 (genie equivalence)",
        same and elapsed < 10.0,
        f"bitwise match={same}, {elapsed:.2f}s < 10s",
    )


def test_criterion_2_deterministic_convergence():
    problem = make_quadratic_problem(n=20, sigma=0.0, rng=np.random.default_rng(2))
    hyper = HyperParams(gamma=0.1, rho=0.1, mu=1.0)
    diag = Diagnostics(interval=100, B=1, rng=np.random.default_rng(3))
    t0 = time.monotonic()
    traj = run_synchronous_genie(
        problem, hyper, 2000, np.zeros(20),
        samples=[np.zeros(20)] * 2000, diag=diag,
    )
    elapsed = time.monotonic() - t0
    delta = float(traj.delta_sq[-1])
    logged = traj.pi[~np.isnan(traj.pi)]
    pi = float(logged.min())
    _report(
        "criterion 2 (deterministic convergence)",
        delta <= 1e-12 and pi <= 1e-10 and elapsed < 5.0,
        f"delta={delta:.3g} <= 1e-12, pi={pi:.3g} <= 1e-10, {elapsed:.2f}s < 5s",
    )


def test_criterion_3_rate_property():
    t0 = time.monotonic()
    _, means, slope = quadratic_benchmark(seeds=20)
    elapsed = time.monotonic() - t0
    _report(
        "criterion 3 (rate property)",
        -0.8 <= slope <= -0.2 and elapsed < 300.0,
        f"log-log slope={slope:.3f} in [-0.8, -0.2], {elapsed:.1f}s < 300s",
    )


def test_criterion_4_delay_robustness(wsn_experiment):
    result, elapsed = wsn_experiment
    final = result.final_window()
    asyn, _ = final["hybrid_envelope_async"]
    genie, _ = final["hybrid_envelope_genie"]
    practical, _ = final["hybrid_envelope_practical"]
    rel = abs(asyn - genie) / genie
    _report(
        "criterion 4 (delay robustness)",
        rel <= 0.05 and practical > asyn and elapsed < 600.0,
        f"|async-genie|/genie={rel:.4f} <= 0.05, "
        f"practical={practical:.6f} > async={asyn:.6f}, {elapsed:.1f}s < 600s",
    )


def test_criterion_5_design_ordering(wsn_experiment):
    result, elapsed = wsn_experiment
    final = result.final_window()
    inst, _ = final["instantaneous"]
    hyb, _ = final["hybrid_envelope_async"]
    static, _ = final["static_hindsight"]
    # the runs share channel sequences, so the gaps are assessed on the
    # paired per-run differences
    g1, se1 = _paired_gap(result, "instantaneous", "hybrid_envelope_async")
    g2, se2 = _paired_gap(result, "hybrid_envelope_async", "static_hindsight")
    ok = inst < hyb < static and g1 >= se1 and g2 >= se2 and elapsed < 600.0
    _report(
        "criterion 5 (design ordering)",
        ok,
        f"inst={inst:.6f} < hybrid={hyb:.6f} < static={static:.6f}, "
        f"gaps {g1:.6f}>={se1:.6f}SE and {g2:.6f}>={se2:.6f}SE, "
        f"{elapsed:.1f}s < 600s",
    )


def test_criterion_6_sweep_trend():
    cfg = ExperimentConfig(
        variants=("instantaneous", "static_hindsight",
                  "hybrid_envelope", "hybrid_convex"),
        modes=("async",),
    )
    stds = [0.01, 0.05, 0.10, 0.15]
    t0 = time.monotonic()
    rows, _, _ = run_sweep(cfg, stds)
    elapsed = time.monotonic() - t0
    table = {(r["sigma_c"], r["variant"]): r["mse_mean"] for r in rows}

    def curve(name):
        return [table[(sc, name)] for sc in stds]

    monotone = all(
        all(np.diff(curve(name)) >= -1e-12)
        for name in ("static_hindsight", "hybrid_envelope_async",
                     "hybrid_convex_async")
    )
    inst = curve("instantaneous")
    inst_var = (max(inst) - min(inst)) / np.mean(inst)
    dominated = all(
        table[(sc, "hybrid_envelope_async")] < table[(sc, "static_hindsight")]
        for sc in stds
    )
    _report(
        "criterion 6 (sweep trend)",
        monotone and inst_var <= 0.10 and dominated and elapsed < 1800.0,
        f"monotone={monotone}, instantaneous variation={inst_var:.3f} <= 0.10, "
        f"hybrid<static everywhere={dominated}, {elapsed:.1f}s < 1800s",
    )


def test_criterion_7_check_suite():
    t0 = time.monotonic()
    results = run_all_checks()
    elapsed = time.monotonic() - t0
    failed = [r.name for r in results if not r.passed]
    _report(
        "criterion 7 (numerical correctness suite)",
        not failed and elapsed < 120.0,
        f"{len(results)} checks, failed={failed}, {elapsed:.1f}s < 120s",
    )


def test_criterion_8_hyperparameter_gate():
    chk1 = validate_hyperparams(L=1.0, l_hat=1.0, mu=1.0, gamma=0.01, rho=0.01, tau=0)
    fixture1 = abs(chk1.c_mu - (-1.005)) <= 1e-12 and not chk1.ok
    expected2 = 5.0 - 0.001 - 0.05 - 16 * 0.1 * 0.001 * 29.09
    chk2 = validate_hyperparams(L=2.0, l_hat=3.0, mu=5.0, gamma=0.001, rho=0.1, tau=4)
    fixture2 = abs(chk2.c_mu - expected2) <= 1e-12 and chk2.ok
    regime = rate_regime_check(T=10_000, L=1.0, l_hat=1.0, tau=10)
    _report(
        "criterion 8 (hyperparameter gate)",
        fixture1 and fixture2 and regime.ok,
        f"fixtures exact={fixture1 and fixture2}, "
        f"diminishing-step regime feasible={regime.ok} (c_mu={regime.c_mu:.4f})",
    )
