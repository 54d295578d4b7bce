"""Coordinate ascent on the approximate ELBO over diagonal Gaussian mixtures.

Each sweep maximizes ``F_0`` over all component means jointly, then ``F_2`` over
the weights (softmax parameterization), then ``F_2`` over the diagonal
variances. Sweeps stop once ``F_2`` changes by less than ``tol``. Every inner
problem is solved with L-BFGS-B.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import OptimizeResult, minimize
from scipy.special import softmax

from .elbo import ComponentLinearization, elbo_F, elbo_grads, linearize
from .joint import JointDensityModel
from .mixture import VAR_HI, VAR_LO, MixtureState, entropy_bound, entropy_bound_grads

log = logging.getLogger(__name__)


class FitError(RuntimeError):
    """Raised when every restart ends with a non-finite objective."""

    def __init__(self, message, reports=()):
        super().__init__(message)
        self.reports = list(reports)


def lbfgsb_minimize(fun, x0, bounds=None, maxiter=1000, gtol=1e-5, ftol=1e-14, maxls=50):
    """Minimize ``fun`` (returning value and gradient) with L-BFGS-B.

    Non-finite values are replaced by a large finite penalty so the line search
    backtracks; how often that happened is reported in ``n_nonfinite``. The
    returned point never has a larger objective than ``x0``.

    Args:
        fun: callable ``x -> (f, grad)``.
        x0: starting point, must lie within ``bounds``.
        bounds: sequence of ``(lo, hi)`` pairs (``None`` for unbounded sides) or None.

    Returns:
        scipy ``OptimizeResult`` with the extra field ``n_nonfinite``.
    """
    x0 = np.asarray(x0, dtype=float)
    if bounds is not None:
        lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
        hi = np.array([np.inf if b[1] is None else b[1] for b in bounds])
        if np.any(x0 < lo) or np.any(x0 > hi):
            raise ValueError("x0 is outside the bounds")
    f0, g0 = fun(x0)
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at x0")
    penalty = abs(f0) + 1e10
    n_bad = 0

    def wrapped(x):
        nonlocal n_bad
        f, g = fun(x)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            n_bad += 1
            return penalty, np.zeros_like(x)
        return f, g

    res = minimize(
        wrapped,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": maxiter, "gtol": gtol, "ftol": ftol, "maxls": maxls},
    )
    if not res.fun <= f0:
        res.x, res.fun, res.jac = x0, f0, g0
    res.n_nonfinite = n_bad
    return res


@dataclass
class FitConfig:
    """Settings for :func:`fit`.

    ``mean_bounds`` is None or one ``(lo, hi)`` pair per dimension of ``omega``
    (``None`` entries mean unbounded). ``init_means`` (L, d), when given,
    replaces random initialization and disables restarts.
    """

    L: int = 1
    tol: float = 1e-2
    var_bounds: tuple[float, float] = (VAR_LO, VAR_HI)
    mean_bounds: list | None = None
    max_sweeps: int = 50
    inner_maxiter: int = 1000
    gtol: float = 1e-5
    seed: int = 0
    n_restarts: int = 5
    init_means: list | None = None

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0 < self.var_bounds[0] < self.var_bounds[1]:
            raise ValueError("variance bounds must satisfy 0 < lo < hi")
        if self.L < 1 or self.n_restarts < 1:
            raise ValueError("L and n_restarts must be at least 1")


@dataclass
class SweepRecord:
    """Objective values around each step of one sweep.

    The mean step is judged on ``F_0`` and the weight/variance steps on ``F_2``.
    ``F2_before_w`` already uses the linearization at the new means.
    """

    sweep: int
    F0_before_mu: float
    F0_after_mu: float
    F2_before_w: float
    F2_after_w: float
    F2_after_var: float
    forward_evals: int

    @property
    def F2(self) -> float:
        return self.F2_after_var


@dataclass
class FitReport:
    state: MixtureState
    trace: list[SweepRecord]
    n_forward: int
    converged: bool
    restart: int = 0
    restart_F2: list[float] = field(default_factory=list)
    n_forward_total: int = 0
    message: str = ""

    @property
    def F2_trace(self) -> np.ndarray:
        return np.array([r.F2 for r in self.trace])

    @property
    def F2(self) -> float:
        return float(self.trace[-1].F2) if self.trace else float("nan")

    def to_dict(self) -> dict:
        return {
            "state": self.state.to_dict(),
            "trace": [asdict(r) for r in self.trace],
            "n_forward": self.n_forward,
            "n_forward_total": self.n_forward_total,
            "converged": self.converged,
            "restart": self.restart,
            "restart_F2": list(self.restart_F2),
            "message": self.message,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["sweep", "F2", "forward_evals"])
        for r in self.trace:
            writer.writerow([r.sweep, repr(float(r.F2)), r.forward_evals])
        return buf.getvalue()


def _mean_bounds(cfg: FitConfig, d: int):
    if cfg.mean_bounds is None:
        return None
    if len(cfg.mean_bounds) != d:
        raise ValueError(f"mean_bounds has {len(cfg.mean_bounds)} entries, need {d}")
    return [tuple(b) if b is not None else (None, None) for b in cfg.mean_bounds]


def _clip_to_bounds(x, bounds):
    if bounds is None:
        return x
    lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
    hi = np.array([np.inf if b[1] is None else b[1] for b in bounds])
    return np.clip(x, lo, hi)


def _initial_means(model, cfg, rng, bounds):
    if cfg.init_means is not None:
        means = np.array(cfg.init_means, dtype=float).reshape(cfg.L, model.dim)
    else:
        means = model.sample_prior(rng, cfg.L)
    return _clip_to_bounds(means, bounds)


def _mu_step(model, q, cfg, bounds):
    L, d = q.means.shape
    flat_bounds = None if bounds is None else bounds * L

    def objective(x):
        means = x.reshape(L, d)
        lin = linearize(model, means)
        if not lin.finite:
            return np.inf, np.zeros_like(x)
        trial = MixtureState(q.weights, means, q.variances)
        _, dmu_h, _ = entropy_bound_grads(trial)
        F0 = entropy_bound(trial) + q.weights @ lin.C
        grad = dmu_h + q.weights[:, None] * lin.D
        return -F0, -grad.ravel()

    res = lbfgsb_minimize(objective, q.means.ravel(), flat_bounds,
                          maxiter=cfg.inner_maxiter, gtol=cfg.gtol)
    return res.x.reshape(L, d)


def _w_step(q, lin, cfg):
    if q.L == 1:
        return q.weights

    def objective(z):
        w = softmax(z)
        trial = MixtureState(w, q.means, q.variances)
        g = elbo_grads(trial, lin, 2, wrt=("w",))["w"]
        # chain rule through softmax: dF/dz_k = w_k (g_k - w.g)
        dz = w * (g - w @ g)
        return -elbo_F(trial, lin, 2), -dz

    z0 = np.log(np.maximum(q.weights, 1e-300))
    z0 -= z0.max()
    res = lbfgsb_minimize(objective, z0, maxiter=cfg.inner_maxiter, gtol=1e-9)
    w = softmax(res.x)
    return w / w.sum()


def _var_step(q, lin, cfg):
    lo, hi = cfg.var_bounds

    def objective(v):
        trial = MixtureState(q.weights, q.means, v.reshape(q.means.shape))
        g = elbo_grads(trial, lin, 2, wrt=("var",))["var"]
        return -elbo_F(trial, lin, 2), -g.ravel()

    v0 = np.clip(q.variances.ravel(), lo, hi)
    res = lbfgsb_minimize(objective, v0, [(lo, hi)] * v0.size,
                          maxiter=cfg.inner_maxiter, gtol=1e-10)
    return np.clip(res.x, lo, hi).reshape(q.means.shape)


def _fit_once(model: JointDensityModel, cfg: FitConfig, restart: int) -> FitReport:
    rng = np.random.default_rng([cfg.seed, restart])
    bounds = _mean_bounds(cfg, model.dim)
    start_evals = model.n_forward
    means = _initial_means(model, cfg, rng, bounds)
    var0 = np.clip(1.0, *cfg.var_bounds)
    q = MixtureState(np.full(cfg.L, 1.0 / cfg.L), means, np.full_like(means, var0))
    lin = linearize(model, q.means)
    if not lin.finite:
        raise FitError("initial means lie outside the prior support")
    F2_prev = elbo_F(q, lin, 2)
    trace = []
    converged = False
    for sweep in range(1, cfg.max_sweeps + 1):
        F0_before = elbo_F(q, lin, 0)
        q = MixtureState(q.weights, _mu_step(model, q, cfg, bounds), q.variances)
        lin = linearize(model, q.means)
        F0_after = elbo_F(q, lin, 0)

        F2_before_w = elbo_F(q, lin, 2)
        q = MixtureState(_w_step(q, lin, cfg), q.means, q.variances)
        F2_after_w = elbo_F(q, lin, 2)

        q = MixtureState(q.weights, q.means, _var_step(q, lin, cfg))
        F2 = elbo_F(q, lin, 2)
        trace.append(SweepRecord(sweep, F0_before, F0_after, F2_before_w, F2_after_w, F2,
                                 model.n_forward - start_evals))
        log.debug("restart %d sweep %d: F2=%.6f", restart, sweep, F2)
        if not np.isfinite(F2):
            break
        if abs(F2 - F2_prev) < cfg.tol:
            converged = True
            break
        F2_prev = F2
    return FitReport(q, trace, model.n_forward - start_evals, converged, restart)


def fit(model: JointDensityModel, cfg: FitConfig | None = None) -> FitReport:
    """Run the coordinate ascent from ``cfg.n_restarts`` random starts.

    Returns the report of the restart with the largest final ``F_2``; its
    ``restart_F2`` lists the final ``F_2`` of every restart.
    """
    cfg = cfg or FitConfig()
    n_restarts = 1 if cfg.init_means is not None else cfg.n_restarts
    start = model.n_forward
    reports = []
    finals = []
    for k in range(n_restarts):
        try:
            reports.append(_fit_once(model, cfg, k))
            finals.append(reports[-1].F2)
        except (FloatingPointError, ValueError, FitError) as err:
            log.warning("restart %d failed: %s", k, err)
            finals.append(float("nan"))
    good = [r for r in reports if np.isfinite(r.F2)]
    if not good:
        raise FitError("all restarts ended with a non-finite objective", reports)
    best = max(good, key=lambda r: r.F2)
    best.restart_F2 = finals
    best.n_forward_total = model.n_forward - start
    best.message = "converged" if best.converged else "max_sweeps reached"
    return best
