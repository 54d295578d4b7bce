"""Command-line experiment runner.

Usage::

    varinverse run config.json [--seed S] [--out DIR] [--fast]
    varinverse make-data config.json [--seed S] [--out DIR] [--fast]

The config is one JSON object; see the README for the schema. Exit codes are
0 on success, 2 for configuration errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .catalysis import IntegrationError, catalysis_model, rate_summary
from .diffusion import (
    SENSOR_LAYOUTS,
    TRUE_NOISE,
    TRUE_SOURCE,
    DiffusionProblem,
    data_from_csv,
    data_to_csv,
    diffusion_model,
    make_synthetic_data,
    mirror_jump,
)
from .fit import FitConfig, FitError, fit
from .joint import GaussianPrior, IsoGaussianLikelihood, JointDensityModel, LinearForward
from .mcmc import Chain, MalaConfig, SamplerError, mala_sample
from .mixture import MixtureState

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

PROBLEMS = ("catalysis", "diffusion-corners", "diffusion-midpoints", "linear-gaussian")
METHODS = ("vi", "mala")

FAST_TRUTH_N, FAST_INFER_N, FAST_MALA_STEPS = 55, 15, 20_000
FULL_TRUTH_N, FULL_INFER_N = 110, 25
DIFFUSION_XI_BOUNDS = (0.01, 0.99)

_TOP_KEYS = {"problem", "method", "seed", "fast", "output_dir", "fit", "mala", "init",
             "catalysis", "diffusion", "linear_gaussian", "make_data"}


class ConfigError(ValueError):
    """The experiment config is missing, malformed or inconsistent."""


NUMERIC_ERRORS = (FitError, SamplerError, IntegrationError, ArithmeticError,
                  np.linalg.LinAlgError, ValueError)


@dataclass
class ExperimentConfig:
    problem: str
    method: str
    seed: int
    fast: bool = False
    output_dir: str = "results"
    fit: dict = field(default_factory=dict)
    mala: dict = field(default_factory=dict)
    init: list | None = None
    catalysis: dict = field(default_factory=dict)
    diffusion: dict = field(default_factory=dict)
    linear_gaussian: dict = field(default_factory=dict)
    make_data: dict = field(default_factory=dict)
    base_dir: Path = field(default=Path("."), repr=False)

    def hashable(self) -> dict:
        doc = asdict(self)
        doc.pop("base_dir")
        doc.pop("output_dir")  # where results go does not change them
        return doc

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.hashable(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    @property
    def stamp(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.seed}


def load_config(path, seed=None, out=None, fast=False) -> ExperimentConfig:
    """Parse and validate a config file; command-line values override the file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if seed is not None:
        doc["seed"] = seed
    if out is not None:
        doc["output_dir"] = str(out)
    if fast:
        doc["fast"] = True
    if "seed" not in doc:
        raise ConfigError("a seed is required (config key 'seed' or --seed)")
    if not isinstance(doc["seed"], int) or isinstance(doc["seed"], bool) or doc["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    if doc.get("problem") not in PROBLEMS:
        raise ConfigError(f"problem must be one of {PROBLEMS}")
    doc.setdefault("method", "vi")
    if doc["method"] not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    for key in ("fit", "mala", "catalysis", "diffusion", "linear_gaussian", "make_data"):
        if not isinstance(doc.get(key, {}), dict):
            raise ConfigError(f"'{key}' must be an object")
    cfg = ExperimentConfig(**doc, base_dir=path.resolve().parent)
    # construct once so bad option names/values surface as config errors
    _fit_config(cfg, dim=None)
    _mala_config(cfg)
    return cfg


def _checked(cls, options: dict, **extra):
    names = {f.name for f in fields(cls)}
    bad = set(options) - names
    if bad:
        raise ConfigError(f"unknown {cls.__name__} options: {sorted(bad)}")
    try:
        return cls(**{**options, **extra})
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid {cls.__name__}: {err}") from err


def _fit_config(cfg: ExperimentConfig, dim: int | None) -> FitConfig:
    opts = dict(cfg.fit)
    if cfg.problem.startswith("diffusion") and "mean_bounds" not in opts and dim is not None:
        opts["mean_bounds"] = [DIFFUSION_XI_BOUNDS] * 2 + [None] * (dim - 2)
    return _checked(FitConfig, opts, seed=cfg.seed)


def _mala_config(cfg: ExperimentConfig) -> MalaConfig:
    opts = dict(cfg.mala)
    if cfg.fast:
        opts["n_steps"] = FAST_MALA_STEPS
    return _checked(MalaConfig, opts, seed=cfg.seed)


# ---------------------------------------------------------------- problems

def parameter_names(cfg: ExperimentConfig, model: JointDensityModel) -> list[str]:
    names = [f"xi{j + 1}" for j in range(model.d_xi)]
    return names + ["theta"] * model.d_theta


def _diffusion_case(cfg):
    return cfg.problem.split("-", 1)[1]


def _problem_kwargs(opts: dict) -> dict:
    allowed = {"dt", "rho", "shutoff", "strength", "times"}
    bad = set(opts) - allowed - {"data", "n"}
    if bad:
        raise ConfigError(f"unknown diffusion options: {sorted(bad)}")
    kw = {k: v for k, v in opts.items() if k in allowed}
    if "times" in kw:
        kw["times"] = tuple(kw["times"])
    return kw


def _diffusion_data(cfg: ExperimentConfig):
    """Observations for a diffusion run: from the data file, or synthesized in-process."""
    opts = cfg.diffusion
    case = _diffusion_case(cfg)
    if "data" in opts:
        path = cfg.base_dir / opts["data"]
        try:
            y, sensors, times = data_from_csv(path.read_text())
        except OSError as err:
            raise ConfigError(f"cannot read data file: {err}") from err
        if not np.allclose(np.array(sensors), np.array(SENSOR_LAYOUTS[case])):
            raise ConfigError(f"data sensors {sensors} do not match case '{case}'")
        return y, times
    y, _ = _synthesize(cfg)
    return y, None


def _synthesize(cfg: ExperimentConfig):
    md = dict(cfg.make_data)
    bad = set(md) - {"xi_star", "sigma", "n", "seed"}
    if bad:
        raise ConfigError(f"unknown make_data options: {sorted(bad)}")
    n = md.get("n", FAST_TRUTH_N if cfg.fast else FULL_TRUTH_N)
    kw = _problem_kwargs({k: v for k, v in cfg.diffusion.items()})
    y, clean = make_synthetic_data(
        _diffusion_case(cfg),
        xi_star=tuple(md.get("xi_star", TRUE_SOURCE)),
        sigma=float(md.get("sigma", TRUE_NOISE)),
        n=int(n),
        seed=int(md.get("seed", cfg.seed)),
        **kw,
    )
    return y, clean


def _linear_gaussian(opts: dict):
    try:
        A = np.atleast_2d(np.asarray(opts["A"], dtype=float))
        y = np.asarray(opts["y"], dtype=float)
        noise_sd = float(opts["noise_sd"])
        d = A.shape[1]
        b = np.asarray(opts.get("b", np.zeros(A.shape[0])), dtype=float)
        prior_mean = np.broadcast_to(np.asarray(opts.get("prior_mean", 0.0), float), (d,)).copy()
        prior_var = np.broadcast_to(np.asarray(opts.get("prior_var", 1.0), float), (d,)).copy()
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"linear_gaussian needs A, y, noise_sd: {err}") from err
    if noise_sd <= 0 or np.any(prior_var <= 0):
        raise ConfigError("noise_sd and prior_var must be positive")
    try:
        model = JointDensityModel(
            LinearForward(A, b),
            IsoGaussianLikelihood(fixed_theta=np.log(noise_sd)),
            GaussianPrior(prior_mean, prior_var),
            None,
            y,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err
    # closed-form posterior for the summary
    prec = A.T @ A / noise_sd**2 + np.diag(1.0 / prior_var)
    cov = np.linalg.inv(prec)
    mean = cov @ (A.T @ (y - b) / noise_sd**2 + prior_mean / prior_var)
    exact = {"mean": mean.tolist(), "std": np.sqrt(np.diag(cov)).tolist()}
    return model, exact


def build_model(cfg: ExperimentConfig):
    """Returns ``(model, extras)`` where extras holds problem-specific summary data."""
    if cfg.problem == "catalysis":
        opts = dict(cfg.catalysis)
        bad = set(opts) - {"include_initial_row", "ode_method"}
        if bad:
            raise ConfigError(f"unknown catalysis options: {sorted(bad)}")
        default_method = "expm" if cfg.method == "mala" else "RK45"
        method = opts.get("ode_method", default_method)
        if method not in ("RK45", "DOP853", "expm"):
            raise ConfigError("ode_method must be RK45, DOP853 or expm")
        model = catalysis_model(method=method,
                                include_initial_row=bool(opts.get("include_initial_row", False)))
        return model, {}
    if cfg.problem == "linear-gaussian":
        model, exact = _linear_gaussian(cfg.linear_gaussian)
        return model, {"exact_posterior": exact}
    opts = dict(cfg.diffusion)
    kw = _problem_kwargs(opts)
    y, times = _diffusion_data(cfg)
    if times is not None:
        kw["times"] = times
    n = int(opts.get("n", FAST_INFER_N if cfg.fast else FULL_INFER_N))
    try:
        model = diffusion_model(y, _diffusion_case(cfg), n=n, **kw)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    return model, {"grid": n}


# ---------------------------------------------------------------- outputs

def _csv_text(header, rows, stamp) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={stamp['config_hash']} seed={stamp['seed']}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _write_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=2) + "\n")


def mixture_marginals(q: MixtureState):
    """Per-coordinate mean and std of a mixture (exact moments)."""
    mean = q.weights @ q.means
    second = q.weights @ (q.variances + q.means**2)
    return mean, np.sqrt(np.maximum(second - mean**2, 0.0))


def marginal_density_rows(q: MixtureState, names, n_points=201):
    sd = np.sqrt(q.variances)
    rows = []
    for j, name in enumerate(names):
        x = np.linspace((q.means[:, j] - 4 * sd[:, j]).min(), (q.means[:, j] + 4 * sd[:, j]).max(),
                        n_points)
        z = (x[None, :] - q.means[:, j, None]) / sd[:, j, None]
        dens = q.weights @ (np.exp(-0.5 * z**2) / (np.sqrt(2 * np.pi) * sd[:, j, None]))
        rows.extend((name, xv, dv) for xv, dv in zip(x, dens))
    return rows


def histogram_rows(samples, names, bins=40):
    rows = []
    for j, name in enumerate(names):
        dens, edges = np.histogram(samples[:, j], bins=bins, density=True)
        centres = 0.5 * (edges[1:] + edges[:-1])
        rows.extend((name, c, d) for c, d in zip(centres, dens))
    return rows


def _chain_rate_summary(samples) -> dict:
    logk = samples.copy()
    logk[:, :5] -= np.log(180.0)
    q = np.exp(np.quantile(logk, [0.025, 0.5, 0.975], axis=0))
    names = [f"k{j + 1}" for j in range(5)] + ["sigma"]
    return {n: {"median": float(q[1, j]), "lower": float(q[0, j]), "upper": float(q[2, j])}
            for j, n in enumerate(names)}


def run_vi(cfg: ExperimentConfig, model, extras, out: Path) -> dict:
    fcfg = _fit_config(cfg, model.dim)
    report = fit(model, fcfg)
    names = parameter_names(cfg, model)
    stamp = cfg.stamp
    q = report.state
    mean, std = mixture_marginals(q)
    summary = {
        **stamp,
        "problem": cfg.problem,
        "method": "vi",
        "parameters": {n: {"mean": float(m), "std": float(s)} for n, m, s in zip(names, mean, std)},
        "F2": report.F2,
        "converged": report.converged,
        "n_forward": report.n_forward,
        "n_forward_total": report.n_forward_total,
        "restart": report.restart,
        "restart_F2": report.restart_F2,
        **extras,
    }
    if cfg.problem == "catalysis" and q.L == 1:
        summary["rates"] = rate_summary(q.means[0], q.variances[0])
    _write_json(out / "mixture.json", {**stamp, "state": q.to_dict()})
    _write_json(out / "summary.json", summary)
    trace_rows = [(r.sweep, float(r.F2), r.forward_evals) for r in report.trace]
    (out / "trace.csv").write_text(_csv_text(["sweep", "F2", "forward_evals"], trace_rows, stamp))
    (out / "marginals.csv").write_text(
        _csv_text(["parameter", "x", "density"], marginal_density_rows(q, names), stamp))
    return summary


def _mala_start(cfg, model):
    if cfg.init is not None:
        omega0 = np.asarray(cfg.init, dtype=float)
        if omega0.shape != (model.dim,):
            raise ConfigError(f"init must have {model.dim} entries")
        return omega0
    # warm start at a single-restart L=1 fit
    warm = FitConfig(L=1, seed=cfg.seed, n_restarts=1,
                     mean_bounds=_fit_config(cfg, model.dim).mean_bounds)
    return fit(model, warm).state.means[0]


def run_mala(cfg: ExperimentConfig, model, extras, out: Path) -> dict:
    mcfg = _mala_config(cfg)
    jump = mirror_jump if cfg.problem == "diffusion-midpoints" else None
    if mcfg.p_jump > 0 and jump is None:
        raise ConfigError("p_jump is only available for diffusion-midpoints")
    omega0 = _mala_start(cfg, model)
    chain: Chain = mala_sample(model, omega0, mcfg, jump=jump)
    names = parameter_names(cfg, model)
    stamp = cfg.stamp
    summary = {
        **stamp,
        "problem": cfg.problem,
        "method": "mala",
        "parameters": {n: {"mean": float(m), "std": float(s)}
                       for n, m, s in zip(names, chain.mean, chain.std)},
        "acceptance_rate": chain.acceptance_rate,
        "n_samples": int(chain.samples.shape[0]),
        "n_forward": model.n_forward,
        **extras,
    }
    if cfg.problem == "catalysis":
        summary["rates"] = _chain_rate_summary(chain.samples)
    (out / "chain.csv").write_text(_csv_text(names, chain.samples.tolist(), stamp))
    _write_json(out / "chain.json", {**stamp, "parameters": names, **chain.summary()})
    _write_json(out / "summary.json", summary)
    (out / "marginals.csv").write_text(
        _csv_text(["parameter", "x", "density"], histogram_rows(chain.samples, names), stamp))
    return summary


def cmd_run(cfg: ExperimentConfig) -> dict:
    model, extras = build_model(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    runner = run_vi if cfg.method == "vi" else run_mala
    return runner(cfg, model, extras, out)


def cmd_make_data(cfg: ExperimentConfig) -> dict:
    if not cfg.problem.startswith("diffusion"):
        raise ConfigError("make-data only applies to diffusion problems")
    y, _ = _synthesize(cfg)
    md = cfg.make_data
    n = int(md.get("n", FAST_TRUTH_N if cfg.fast else FULL_TRUTH_N))
    problem = DiffusionProblem(n=n, sensors=SENSOR_LAYOUTS[_diffusion_case(cfg)],
                               **_problem_kwargs(cfg.diffusion))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = cfg.stamp
    header = f"# config_hash={stamp['config_hash']} seed={stamp['seed']}\n"
    (out / "data.csv").write_text(header + data_to_csv(y, problem))
    provenance = {
        **stamp,
        "problem": cfg.problem,
        "xi_star": list(md.get("xi_star", TRUE_SOURCE)),
        "sigma": float(md.get("sigma", TRUE_NOISE)),
        "grid": n,
        "noise_seed": int(md.get("seed", cfg.seed)),
        "sensors": [list(s) for s in problem.sensors],
        "times": list(problem.times),
    }
    _write_json(out / "provenance.json", provenance)
    return provenance


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varinverse", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "fit or sample a posterior"),
                            ("make-data", "write synthetic diffusion data")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="experiment JSON file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--fast", action="store_true", help="desk-scale profile")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out, fast=args.fast)
        command = cmd_run if args.command == "run" else cmd_make_data
        result = command(cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps({k: result[k] for k in ("config_hash", "seed")}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
