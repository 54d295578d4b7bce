"""Metropolis-adjusted Langevin sampler used as the reference posterior."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .joint import JointDensityModel


class SamplerError(RuntimeError):
    pass


@dataclass
class MalaConfig:
    """MALA settings.

    The proposal is ``omega + dt**2/2 * grad J(omega) + dt * N(0, I)``. With
    probability ``p_jump`` the deterministic ``jump`` map (a volume-preserving
    involution, e.g. a mirror reflection) is proposed instead.
    """

    dt: float = 0.1
    burn_in: int = 1000
    thin: int = 100
    n_steps: int = 100_000
    seed: int = 0
    p_jump: float = 0.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps <= self.burn_in:
            raise ValueError("n_steps must exceed burn_in")
        if self.thin < 1 or not 0.0 <= self.p_jump <= 1.0:
            raise ValueError("need thin >= 1 and 0 <= p_jump <= 1")


@dataclass
class Chain:
    samples: np.ndarray
    acceptance_rate: float
    n_jumps_accepted: int = 0

    @property
    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.samples.std(axis=0, ddof=1)

    def summary(self) -> dict:
        return {
            "n_samples": int(self.samples.shape[0]),
            "acceptance_rate": float(self.acceptance_rate),
            "n_jumps_accepted": int(self.n_jumps_accepted),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    def to_csv(self, names=None) -> str:
        d = self.samples.shape[1]
        names = names or [f"omega{j}" for j in range(d)]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for row in self.samples:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def summary_json(self, **kwargs) -> str:
        return json.dumps(self.summary(), **kwargs)


def _log_proposal(dst, src, grad_src, dt):
    # log density (up to a constant) of proposing dst from src
    r = dst - src - 0.5 * dt**2 * grad_src
    return -0.5 * float(r @ r) / dt**2


def log_accept_ratio(model: JointDensityModel, x, x_new, dt: float, ev=None, ev_new=None) -> float:
    """Metropolis-Hastings log ratio for a Langevin move ``x -> x_new``."""
    ev = ev if ev is not None else model(x, 1)
    ev_new = ev_new if ev_new is not None else model(x_new, 1)
    if not ev_new.finite:
        return -np.inf
    return (
        ev_new.value
        - ev.value
        + _log_proposal(x, x_new, ev_new.grad, dt)
        - _log_proposal(x_new, x, ev.grad, dt)
    )


def mala_sample(model: JointDensityModel, omega0, cfg: MalaConfig | None = None,
                jump=None) -> Chain:
    """Run one MALA chain from ``omega0``.

    Samples after ``burn_in`` are kept every ``thin`` steps, giving
    ``(n_steps - burn_in) // thin`` rows.
    """
    cfg = cfg or MalaConfig()
    if cfg.p_jump > 0 and jump is None:
        raise ValueError("p_jump > 0 needs a jump map")
    rng = np.random.default_rng(cfg.seed)
    x = np.array(omega0, dtype=float)
    ev = model(x, 1)
    if not ev.finite:
        raise SamplerError("log density is not finite at the initial point")
    dt = cfg.dt
    n_keep = (cfg.n_steps - cfg.burn_in) // cfg.thin
    samples = np.empty((n_keep, x.size))
    accepted = 0
    jumps = 0
    k = 0
    for step in range(1, cfg.n_steps + 1):
        if not np.all(np.isfinite(ev.grad)):
            raise SamplerError(f"non-finite gradient at step {step}: {x}")
        if cfg.p_jump > 0 and rng.random() < cfg.p_jump:
            x_new = jump(x)
            ev_new = model(x_new, 1)
            log_r = ev_new.value - ev.value if ev_new.finite else -np.inf
            is_jump = True
        else:
            x_new = x + 0.5 * dt**2 * ev.grad + dt * rng.standard_normal(x.size)
            ev_new = model(x_new, 1)
            log_r = log_accept_ratio(model, x, x_new, dt, ev, ev_new)
            is_jump = False
        if np.log(rng.random()) < log_r:
            x, ev = x_new, ev_new
            accepted += 1
            jumps += is_jump
        if step > cfg.burn_in and (step - cfg.burn_in) % cfg.thin == 0 and k < n_keep:
            samples[k] = x
            k += 1
    return Chain(samples, accepted / cfg.n_steps, jumps)
