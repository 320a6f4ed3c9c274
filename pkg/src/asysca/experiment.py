"""Monte Carlo orchestration of the precoder designs and run modes.

One Monte Carlo run draws a base channel, five warm-up channels, and T slot
channels, then evaluates every selected design on the identical slot
sequence:

* ``instantaneous``     -- per-slot optimal precoder under the full budget;
* ``static_hindsight``  -- one precoder minimizing the time-averaged MSE
  over the whole sequence, evaluated retrospectively;
* ``static_online_sgd`` -- projected prox-SGD on the per-slot quadratics;
* ``hybrid_envelope`` / ``hybrid_convex`` -- SCA-learned static part plus a
  per-slot norm-bounded correction, run in one or more of the
  asynchronous / genie / practical modes.

Outputs are per-series CSVs (run, t, mse), an aggregate CSV (per-slot mean
and standard error over runs), and a JSON manifest.
"""

import configparser
import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__, rng as rngmod, wsn
from .harness import (
    DelayModel,
    Diagnostics,
    format_value,
    run_asynchronous,
    run_practical_synchronous,
    run_synchronous_genie,
)
from .optimizer import HyperParams, prox_sgd_step, validate_hyperparams
from .problem import NumericError, Unconstrained, ZeroRegularizer
from .quadratic import make_quadratic_problem

log = logging.getLogger("asysca")

BASELINE_VARIANTS = ("instantaneous", "static_hindsight", "static_online_sgd")
HYBRID_VARIANTS = ("hybrid_envelope", "hybrid_convex")
ALL_VARIANTS = BASELINE_VARIANTS + HYBRID_VARIANTS
ALL_MODES = ("async", "genie", "practical")
WARMUP_CHANNELS = 5
FINAL_WINDOW = 50


@dataclass
class VariantParams:
    eps: float
    mu: float
    rho: float
    gamma: float
    upsilon: float = 1e-4


DEFAULT_HYBRID_PARAMS = {
    "hybrid_envelope": VariantParams(eps=0.05, mu=0.2, rho=0.1, gamma=0.001),
    "hybrid_convex": VariantParams(eps=0.02, mu=0.01, rho=0.01, gamma=0.001),
}


@dataclass
class ExperimentConfig:
    # model
    p: int = 2
    K: int = 2
    n_fc: int = 2
    n_i: int = 2
    l_i: int = 2
    power: float = 10.0
    noise_db: float = 20.0
    # channel
    sigma_c: float = 0.05
    # run
    T: int = 500
    monte_carlo_runs: int = 50
    seed: int = 81
    variants: tuple = ("instantaneous", "static_hindsight", "hybrid_envelope")
    modes: tuple = ("async",)
    cores: int = 3
    delay_lo: int = 1
    delay_hi: int = 5
    tau: int = 5
    correction_mode: str = "exact"
    diag_interval: int = 0
    diag_B: int = 20
    sgd_eta0: float = 0.05
    # Sweeps rescale each hybrid's correction radius eps proportionally to
    # the perturbation level, anchored at the base sigma_c: the radius
    # budgets for the amount of channel variation it must absorb, so a
    # fixed radius is mis-sized everywhere except at the tuning point.
    sweep_scale_eps: bool = True
    hybrid: dict = field(default_factory=lambda: dict(DEFAULT_HYBRID_PARAMS))

    def __post_init__(self):
        self.variants = tuple(self.variants)
        self.modes = tuple(self.modes)
        for v in self.variants:
            if v not in ALL_VARIANTS:
                raise ValueError(f"unknown variant {v!r}")
        for m in self.modes:
            if m not in ALL_MODES:
                raise ValueError(f"unknown run mode {m!r}")
        if self.T < 1 or self.monte_carlo_runs < 1:
            raise ValueError("T and monte_carlo_runs must be >= 1")
        if self.sigma_c < 0:
            raise ValueError("sigma_c must be nonnegative")
        if self.tau < 1 or self.cores < 1:
            raise ValueError("tau and cores must be >= 1")
        if not 1 <= self.delay_lo <= self.delay_hi:
            raise ValueError("need 1 <= delay_lo <= delay_hi")
        if self.correction_mode not in ("linearized", "exact"):
            raise ValueError("correction_mode must be 'linearized' or 'exact'")
        for name, vp in self.hybrid.items():
            check = validate_hyperparams(
                L=1.0, l_hat=max(vp.mu, 1e-9), mu=vp.mu,
                gamma=vp.gamma, rho=vp.rho, tau=self.tau,
            )
            if not check.ok:
                log.warning(
                    "step-size feasibility constant C_mu = %.3g <= 0 for %s",
                    check.c_mu, name,
                )

    @classmethod
    def from_ini(cls, path):
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise FileNotFoundError(path)
        cfg = cls.__new__(cls)
        # start from defaults, then override field by field
        base = cls()
        for f in (
            "p", "K", "n_fc", "n_i", "l_i", "T", "monte_carlo_runs", "seed",
            "cores", "delay_lo", "delay_hi", "tau", "diag_interval", "diag_B",
        ):
            setattr(cfg, f, base.__dict__[f])
        for f in ("power", "noise_db", "sigma_c", "sgd_eta0"):
            setattr(cfg, f, base.__dict__[f])
        cfg.variants = base.variants
        cfg.modes = base.modes
        cfg.correction_mode = base.correction_mode
        cfg.sweep_scale_eps = base.sweep_scale_eps
        cfg.hybrid = dict(DEFAULT_HYBRID_PARAMS)

        def getint(sec, key, cur):
            return parser.getint(sec, key, fallback=cur)

        def getfloat(sec, key, cur):
            return parser.getfloat(sec, key, fallback=cur)

        if parser.has_section("model"):
            for key in ("p", "K", "n_fc", "n_i", "l_i"):
                setattr(cfg, key.lower() if key != "K" else "K",
                        getint("model", key.lower(), getattr(cfg, key)))
            cfg.power = getfloat("model", "power", cfg.power)
            cfg.noise_db = getfloat("model", "noise_db", cfg.noise_db)
        if parser.has_section("channel"):
            cfg.sigma_c = getfloat("channel", "sigma_c", cfg.sigma_c)
        if parser.has_section("run"):
            cfg.T = getint("run", "t", cfg.T)
            cfg.monte_carlo_runs = getint("run", "monte_carlo_runs", cfg.monte_carlo_runs)
            cfg.seed = getint("run", "seed", cfg.seed)
            cfg.cores = getint("run", "cores", cfg.cores)
            cfg.delay_lo = getint("run", "delay_lo", cfg.delay_lo)
            cfg.delay_hi = getint("run", "delay_hi", cfg.delay_hi)
            cfg.tau = getint("run", "tau", cfg.tau)
            cfg.diag_interval = getint("run", "diag_interval", cfg.diag_interval)
            cfg.diag_B = getint("run", "diag_b", cfg.diag_B)
            cfg.sgd_eta0 = getfloat("run", "sgd_eta0", cfg.sgd_eta0)
            cfg.correction_mode = parser.get(
                "run", "correction_mode", fallback=cfg.correction_mode
            )
            cfg.sweep_scale_eps = parser.getboolean(
                "run", "sweep_scale_eps", fallback=cfg.sweep_scale_eps
            )
            if parser.has_option("run", "variants"):
                cfg.variants = tuple(
                    v.strip() for v in parser.get("run", "variants").split(",") if v.strip()
                )
            if parser.has_option("run", "modes"):
                cfg.modes = tuple(
                    m.strip() for m in parser.get("run", "modes").split(",") if m.strip()
                )
        for name in HYBRID_VARIANTS:
            if parser.has_section(name):
                vp = cfg.hybrid[name]
                cfg.hybrid[name] = VariantParams(
                    eps=getfloat(name, "eps", vp.eps),
                    mu=getfloat(name, "mu", vp.mu),
                    rho=getfloat(name, "rho", vp.rho),
                    gamma=getfloat(name, "gamma", vp.gamma),
                    upsilon=getfloat(name, "upsilon", vp.upsilon),
                )
        cfg.__post_init__()
        return cfg

    def series_names(self):
        names = []
        for v in self.variants:
            if v in BASELINE_VARIANTS:
                names.append(v)
            else:
                names.extend(f"{v}_{m}" for m in self.modes)
        return names

    def fingerprint(self):
        payload = {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in self.__dict__.items() if k != "hybrid"}
        payload["hybrid"] = {k: vars(vp) for k, vp in sorted(self.hybrid.items())}
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode("utf-8")
        ).hexdigest()


# ---------------------------------------------------------------------------
# Single Monte Carlo run
# ---------------------------------------------------------------------------

def _hash_sequence(slots):
    h = hashlib.sha256()
    for Xi in slots:
        h.update(np.ascontiguousarray(Xi).tobytes())
    return h.hexdigest()


def _assert_shared_channels(slots, expected):
    if _hash_sequence(slots) != expected:
        raise NumericError("channel sequence differs between variants")


def _eval_instantaneous(model, quads, constraint, expected_hash, slots):
    _assert_shared_channels(slots, expected_hash)
    mse = np.empty(len(quads))
    x = None
    for i, quad in enumerate(quads):
        x = wsn.solve_power_constrained_qp(quad, constraint, x0=x)
        mse[i] = quad.value(x)
    return mse


def _eval_static_hindsight(model, quads, constraint, expected_hash, slots):
    _assert_shared_channels(slots, expected_hash)
    x = wsn.solve_power_constrained_qp(quads, constraint)
    return np.array([quad.value(x) for quad in quads])


def _eval_static_online_sgd(model, quads, constraint, x0, eta0, expected_hash, slots):
    _assert_shared_channels(slots, expected_hash)
    h = ZeroRegularizer()
    x = constraint.project(np.asarray(x0, float))
    mse = np.empty(len(quads))
    for i, quad in enumerate(quads):
        mse[i] = quad.value(x)
        eta = eta0 / np.sqrt(i + 1.0)
        x = prox_sgd_step(x, quad.gradient(x), eta, h, constraint)
    return mse


def _eval_hybrid(cfg, model, channel, quads, name, mode, x0, expected_hash, slots,
                 run_index):
    series = f"{name}_{mode}"
    rng_delays = rngmod.stream(cfg.seed, "delays", run_index, series)
    rng_diag = rngmod.stream(cfg.seed, "diag", run_index, series)
    _assert_shared_channels(slots, expected_hash)
    vp = cfg.hybrid[name]
    variant = "envelope" if name == "hybrid_envelope" else "convex"
    problem = wsn.make_hybrid_problem(
        model, channel, vp.eps, vp.upsilon, variant, vp.mu,
        correction_mode=cfg.correction_mode,
    )
    hyper = HyperParams(gamma=vp.gamma, rho=vp.rho, mu=vp.mu, tau=cfg.tau)
    T = len(quads)
    mse = np.empty(T)

    if variant == "envelope":
        def deployed(quad, x):
            e, _ = wsn.correction_from_quad(quad, x, vp.eps, cfg.correction_mode)
            return quad.value(x + e)
    else:
        def deployed(quad, x):
            e = wsn.smoothed_correction(quad, x, vp.eps, vp.upsilon)
            return quad.value(x + e)

    start = WARMUP_CHANNELS  # first updated slot is start + 1 (1-based)
    for i in range(min(start, T)):
        mse[i] = deployed(quads[i], x0)
    if T <= start:
        return mse

    samples = [wsn.channel_to_xi(Xi) for Xi in slots[start:]]

    def observer(t_local, x, xi):
        return {"mse": deployed(quads[start + t_local - 1], x)}

    diag = None
    if cfg.diag_interval > 0:
        diag = Diagnostics(interval=cfg.diag_interval, B=cfg.diag_B, rng=rng_diag)
    common = dict(samples=samples, observer=observer, diag=diag)
    if mode == "genie":
        traj = run_synchronous_genie(problem, hyper, T - start, x0, **common)
    elif mode == "async":
        delay = DelayModel.uniform(cfg.delay_lo, cfg.delay_hi)
        traj, _ = run_asynchronous(
            problem, hyper, cfg.cores, delay, T - start, x0,
            rng_delays=rng_delays, **common,
        )
    elif mode == "practical":
        delay = DelayModel.deterministic(cfg.tau)
        traj = run_practical_synchronous(
            problem, hyper, delay, T - start, x0, rng_delays=rng_delays, **common
        )
    else:
        raise ValueError(f"unknown run mode {mode!r}")
    mse[start:] = traj.observables["mse"]
    return mse


def build_model(cfg):
    """Sensing model shared by all Monte Carlo runs of one experiment."""
    rng_model = rngmod.stream(cfg.seed, "model")
    return wsn.build_sensing_model(
        p=cfg.p, K=cfg.K, n_fc=cfg.n_fc, n_i=cfg.n_i, l_i=cfg.l_i,
        power=cfg.power, noise_db_below_signal=cfg.noise_db, rng=rng_model,
    )


def run_single(cfg, run_index, model=None):
    """All selected series for one Monte Carlo run; returns {series: mse[T]}."""
    rng_channel = rngmod.stream(cfg.seed, "channel", run_index)
    if model is None:
        model = build_model(cfg)
    channel = wsn.ChannelProcess.draw(rng_channel, model.n_fc, model.n, cfg.sigma_c)
    warm = [channel.sample(rng_channel) for _ in range(WARMUP_CHANNELS)]
    slots = [channel.sample(rng_channel) for _ in range(cfg.T)]
    seq_hash = _hash_sequence(slots)
    quads = [wsn.mse_quadratic_form(model, Xi) for Xi in slots]
    full = model.power_constraint(model.P)

    warm_quads = [wsn.mse_quadratic_form(model, Xi) for Xi in warm]
    x0_full = wsn.solve_power_constrained_qp(warm_quads, full)

    out = {}
    for variant in cfg.variants:
        if variant == "instantaneous":
            out[variant] = _eval_instantaneous(model, quads, full, seq_hash, slots)
        elif variant == "static_hindsight":
            out[variant] = _eval_static_hindsight(model, quads, full, seq_hash, slots)
        elif variant == "static_online_sgd":
            out[variant] = _eval_static_online_sgd(
                model, quads, full, x0_full, cfg.sgd_eta0, seq_hash, slots
            )
        else:
            vp = cfg.hybrid[variant]
            budget = wsn.power_shrink(model.P, model.Gamma, vp.eps)
            if budget <= 0:
                raise ValueError(
                    f"shrunk power budget is zero for {variant}; reduce eps"
                )
            # The warm start is designed under the full budget; pull it into
            # the shrunk feasible set so the deployed power guarantee holds.
            shrunk = model.power_constraint(budget)
            x0 = shrunk.project(x0_full)
            for mode in cfg.modes:
                out[f"{variant}_{mode}"] = _eval_hybrid(
                    cfg, model, channel, quads, variant, mode, x0,
                    seq_hash, slots, run_index,
                )
    return out


# ---------------------------------------------------------------------------
# Monte Carlo aggregation
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    series: dict          # name -> array (kept_runs, T)
    kept_runs: list
    excluded: list        # (run_index, message)

    @property
    def n_kept(self):
        return len(self.kept_runs)

    def aggregate(self):
        """Per-slot mean and standard error of the mean for each series."""
        agg = {}
        for name, arr in self.series.items():
            mean = arr.mean(axis=0)
            if arr.shape[0] > 1:
                se = arr.std(axis=0, ddof=1) / np.sqrt(arr.shape[0])
            else:
                se = np.zeros(arr.shape[1])
            agg[name] = (mean, se)
        return agg

    def final_window(self, window=FINAL_WINDOW):
        """Mean and SE over runs of the per-run final-window average MSE."""
        T = self.config.T
        lo = max(0, T - window)
        out = {}
        for name, arr in self.series.items():
            per_run = arr[:, lo:].mean(axis=1)
            mean = float(per_run.mean())
            se = float(per_run.std(ddof=1) / np.sqrt(len(per_run))) if len(per_run) > 1 else 0.0
            out[name] = (mean, se)
        return out


def run_experiment(cfg, model=None):
    if model is None:
        model = build_model(cfg)
    names = cfg.series_names()
    collected = {name: [] for name in names}
    kept, excluded = [], []
    for run_index in range(cfg.monte_carlo_runs):
        try:
            result = run_single(cfg, run_index, model=model)
        except NumericError as exc:
            log.warning("run %d excluded: %s", run_index, exc)
            excluded.append((run_index, str(exc)))
            continue
        for name in names:
            collected[name].append(result[name])
        kept.append(run_index)
    if not kept:
        raise NumericError("all Monte Carlo runs failed")
    series = {name: np.vstack(collected[name]) for name in names}
    return ExperimentResult(config=cfg, series=series, kept_runs=kept, excluded=excluded)


# ---------------------------------------------------------------------------
# CSV / manifest emission
# ---------------------------------------------------------------------------

def _open_csv(path):
    return open(path, "w", encoding="utf-8", newline="")


def write_series_csv(path, name, arr, kept_runs):
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "t", "mse"])
        for row_idx, run_index in enumerate(kept_runs):
            for t in range(arr.shape[1]):
                w.writerow([run_index, t + 1, format_value(arr[row_idx, t])])


def aggregate_header(names):
    cols = ["t"]
    for name in names:
        cols.extend([f"{name}_mean", f"{name}_se"])
    return cols


def write_aggregate_csv(path, result):
    names = list(result.series)
    agg = result.aggregate()
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(aggregate_header(names))
        for t in range(result.config.T):
            row = [t + 1]
            for name in names:
                mean, se = agg[name]
                row.extend([format_value(mean[t]), format_value(se[t])])
            w.writerow(row)


def write_manifest(path, cfg, extra=None):
    payload = {
        "config_sha256": cfg.fingerprint(),
        "seed": cfg.seed,
        "version": __version__,
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def emit_run_outputs(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name, arr in result.series.items():
        write_series_csv(os.path.join(out_dir, f"{name}.csv"), name, arr,
                         result.kept_runs)
    write_aggregate_csv(os.path.join(out_dir, "aggregate.csv"), result)
    write_manifest(
        os.path.join(out_dir, "manifest.json"), result.config,
        extra={
            "runs_kept": result.n_kept,
            "runs_excluded": len(result.excluded),
            "excluded": [list(e) for e in result.excluded],
        },
    )


# ---------------------------------------------------------------------------
# Sweep over channel perturbation levels
# ---------------------------------------------------------------------------

def run_sweep(cfg, stds):
    """Final-window MSE per (sigma_c, series); returns list of row dicts."""
    rows = []
    excluded_total = runs_total = 0
    for sc in stds:
        if sc < 0:
            raise ValueError("sigma_c must be nonnegative")
        hyb = dict(cfg.hybrid)
        if cfg.sweep_scale_eps and cfg.sigma_c > 0:
            scale = float(sc) / cfg.sigma_c
            hyb = {name: replace(vp, eps=vp.eps * scale)
                   for name, vp in hyb.items()}
        sub = replace(cfg, sigma_c=float(sc), hybrid=hyb)
        result = run_experiment(sub)
        excluded_total += len(result.excluded)
        runs_total += cfg.monte_carlo_runs
        for name, (mean, se) in result.final_window().items():
            rows.append({"sigma_c": float(sc), "variant": name,
                         "mse_mean": mean, "mse_se": se})
    return rows, excluded_total, runs_total


def write_sweep_csv(path, rows):
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sigma_c", "variant", "mse_mean", "mse_se"])
        for r in rows:
            w.writerow([format_value(r["sigma_c"]), r["variant"],
                        format_value(r["mse_mean"]), format_value(r["mse_se"])])


# ---------------------------------------------------------------------------
# Synthetic quadratic rate benchmark
# ---------------------------------------------------------------------------

def quadratic_benchmark(
    seeds=20, horizons=(100, 1000, 10000), sigma=1.0, cores=4,
    delay=None, master_seed=20240115, n=20, diag_logs=50, diag_B=20,
):
    """min-Pi per (T, seed) for the noisy quadratic under Asy-SCA.

    gamma = rho = T^{-1/2}; returns rows (T, seed, min_pi) plus the fitted
    log-log slope of the seed-averaged min-Pi against T.
    """
    if delay is None:
        delay = DelayModel.uniform(1, 5)
    rows = []
    for T in horizons:
        step = 1.0 / np.sqrt(T)
        hyper = HyperParams(gamma=step, rho=step, mu=1.0, tau=cores * delay.tau_max)
        interval = max(1, T // diag_logs)
        for seed_index in range(seeds):
            rng_init = rngmod.stream(master_seed, "init", seed_index)
            problem = make_quadratic_problem(n=n, sigma=sigma, rng=rng_init)
            x1 = problem.constraint.project(rng_init.standard_normal(n))
            diag = Diagnostics(
                interval=interval, B=diag_B,
                rng=rngmod.stream(master_seed, "diag", T, seed_index),
            )
            traj, _ = run_asynchronous(
                problem, hyper, cores, delay, T, x1,
                rng=rngmod.stream(master_seed, "channel", T, seed_index),
                rng_delays=rngmod.stream(master_seed, "delays", T, seed_index),
                diag=diag,
            )
            logged = traj.pi[~np.isnan(traj.pi)]
            rows.append({"T": T, "seed": seed_index, "min_pi": float(logged.min())})
    means = {}
    for T in horizons:
        vals = [r["min_pi"] for r in rows if r["T"] == T]
        means[T] = float(np.mean(vals))
    slope = fit_loglog_slope(list(means.keys()), list(means.values()))
    return rows, means, slope


def fit_loglog_slope(xs, ys):
    lx, ly = np.log10(np.asarray(xs, float)), np.log10(np.asarray(ys, float))
    return float(np.polyfit(lx, ly, 1)[0])


def write_quadratic_csv(path, rows, means, slope):
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["T", "seed", "min_pi", "mean_min_pi", "slope"])
        for r in rows:
            mean = means[r["T"]] if r["seed"] == 0 else float("nan")
            s = slope if (r["seed"] == 0 and r["T"] == max(means)) else float("nan")
            w.writerow([r["T"], r["seed"], format_value(r["min_pi"]),
                        format_value(mean), format_value(s)])
