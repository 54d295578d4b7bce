"""Contaminant source identification on the unit square.

``du/dt = lap(u) + g`` on ``[0, 1]^2`` with zero-flux boundaries and ``u(0) = 0``.
The source is a Gaussian bump of width ``rho`` centred at ``xi`` that is switched
off after ``T_s``. Space is discretized with cell-centred finite volumes and
time with implicit Euler. Derivatives with respect to ``xi`` solve the same
linear system with the differentiated source.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .joint import (
    ForwardModel,
    ForwardOutput,
    GaussianPrior,
    IsoGaussianLikelihood,
    JointDensityModel,
    UniformBoxPrior,
)

CORNERS = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0))
MIDPOINTS = ((0.5, 0.0), (0.5, 1.0))
SENSOR_LAYOUTS = {"corners": CORNERS, "midpoints": MIDPOINTS}

FORCINGS = ("value", "d_x", "d_y", "d2_x", "d2_y")

TRUE_SOURCE = (0.09, 0.23)
TRUE_NOISE = 0.05


@dataclass(eq=False)
class DiffusionProblem:
    """Grid, source and measurement settings.

    Attributes:
        n: cells per side.
        sensors: (x, y) points where the field is read (bilinear interpolation
            between cell centres, constant beyond the outermost centres).
        times: measurement times, each a multiple of ``dt``.
    """

    n: int = 25
    sensors: tuple = CORNERS
    times: tuple = (0.075, 0.15, 0.225, 0.3)
    dt: float = 0.0025
    rho: float = 0.05
    shutoff: float = 0.3
    strength: float | None = None
    _steps: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least 2 cells per side")
        if self.strength is None:
            self.strength = 1.0 / (np.pi * self.rho)
        steps = np.asarray(self.times, dtype=float) / self.dt
        self._steps = np.rint(steps).astype(int)
        if np.any(np.abs(steps - self._steps) > 1e-9) or np.any(np.diff(self._steps) <= 0):
            raise ValueError("measurement times must be increasing multiples of dt")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @cached_property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Five-point finite-volume Laplacian with zero-flux faces (row index = y)."""
        n = self.n
        main = np.full(n, -2.0)
        main[[0, -1]] = -1.0
        lap1 = sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1]) / self.h**2
        eye = sp.identity(n)
        return (sp.kron(eye, lap1) + sp.kron(lap1, eye)).tocsr()

    @cached_property
    def _lu(self):
        m = sp.identity(self.n**2) - self.dt * self.laplacian
        return splu(m.tocsc())

    @cached_property
    def sensor_matrix(self) -> sp.csr_matrix:
        n = self.n
        rows, cols, vals = [], [], []
        for k, (px, py) in enumerate(self.sensors):
            ix, wx = _interp_index(px, n)
            iy, wy = _interp_index(py, n)
            for dy, wyy in ((0, 1.0 - wy), (1, wy)):
                for dx, wxx in ((0, 1.0 - wx), (1, wx)):
                    rows.append(k)
                    cols.append((iy + dy) * n + ix + dx)
                    vals.append(wyy * wxx)
        return sp.csr_matrix((vals, (rows, cols)), shape=(len(self.sensors), n * n))

    def source_terms(self, xi, forcings=FORCINGS) -> np.ndarray:
        """Source and its derivatives in ``xi`` at the cell centres, shape (k, n*n)."""
        xi = np.asarray(xi, dtype=float)
        X, Y = np.meshgrid(self.centers, self.centers)
        dx, dy = X - xi[0], Y - xi[1]
        r2 = self.rho**2
        g = self.strength * np.exp(-(dx**2 + dy**2) / (2 * r2))
        terms = {
            "value": g,
            "d_x": g * dx / r2,
            "d_y": g * dy / r2,
            "d2_x": g * (dx**2 / r2 - 1.0) / r2,
            "d2_y": g * (dy**2 / r2 - 1.0) / r2,
        }
        return np.stack([terms[name].ravel() for name in forcings])

    def fv_solve(self, xi, forcings=("value",)) -> np.ndarray:
        """Solve the FV scheme for each forcing; fields at the measurement times.

        Returns an array of shape (len(times), len(forcings), n, n).
        """
        src = self.source_terms(xi, forcings).T  # (n*n, k)
        u = np.zeros_like(src)
        out = np.empty((len(self._steps), len(forcings), self.n, self.n))
        k = 0
        for step in range(1, self._steps[-1] + 1):
            t = step * self.dt
            rhs = u + self.dt * src if t <= self.shutoff + 1e-12 else u
            u = self._lu.solve(rhs)
            if step == self._steps[k]:
                out[k] = u.T.reshape(len(forcings), self.n, self.n)
                k += 1
        return out

    def sample(self, fields: np.ndarray) -> np.ndarray:
        """Read sensor values from fields of shape (T, k, n, n); returns (T, k, n_sensors)."""
        T, k = fields.shape[:2]
        flat = fields.reshape(T * k, -1)
        return (self.sensor_matrix @ flat.T).T.reshape(T, k, -1)


def _interp_index(p: float, n: int):
    # continuous cell index of coordinate p, clamped to the outermost centres
    s = min(max(p * n - 0.5, 0.0), n - 1.0)
    i = min(int(np.floor(s)), n - 2)
    return i, s - i


class DiffusionForward(ForwardModel):
    """Sensor readings ``f(xi)``, ordered time-major: all sensors at t_1, then t_2, ..."""

    dim_in = 2

    def __init__(self, problem: DiffusionProblem):
        self.problem = problem
        self.dim_out = len(problem.times) * len(problem.sensors)

    def evaluate(self, xi, order=2):
        xi = np.asarray(xi, dtype=float)
        if np.any(xi < 0.0) or np.any(xi > 1.0):
            raise ValueError(f"source location {xi} is outside the unit square")
        forcings = FORCINGS[: 1 + 2 * order]
        readings = self.problem.sample(self.problem.fv_solve(xi, forcings))  # (T, k, S)
        f = readings[:, 0, :].reshape(-1)
        if order == 0:
            return ForwardOutput(f)
        jac = readings[:, 1:3, :].transpose(0, 2, 1).reshape(-1, 2)
        if order == 1:
            return ForwardOutput(f, jac)
        hess = readings[:, 3:5, :].transpose(0, 2, 1).reshape(-1, 2)
        return ForwardOutput(f, jac, hess)


def diffusion_forward(xi, case="corners", n=25, order=2, **problem_kw) -> ForwardOutput:
    problem = DiffusionProblem(n=n, sensors=SENSOR_LAYOUTS[case], **problem_kw)
    return DiffusionForward(problem).evaluate(xi, order)


def make_synthetic_data(case="corners", xi_star=TRUE_SOURCE, sigma=TRUE_NOISE, n=110,
                        seed=0, **problem_kw):
    """Noisy sensor data from a fine-grid solve.

    Returns ``(y, clean)``, where ``clean`` is the noiseless reading vector.
    """
    problem = DiffusionProblem(n=n, sensors=SENSOR_LAYOUTS[case], **problem_kw)
    clean = DiffusionForward(problem).evaluate(np.asarray(xi_star, dtype=float), 0).f
    rng = np.random.default_rng(seed)
    return clean + sigma * rng.standard_normal(clean.shape), clean


def data_to_csv(y, problem: DiffusionProblem) -> str:
    """One row per (time, sensor) pair, in forward-model order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sensor_x", "sensor_y", "time", "value"])
    k = 0
    for t in problem.times:
        for sx, sy in problem.sensors:
            writer.writerow([repr(float(sx)), repr(float(sy)), repr(float(t)), repr(float(y[k]))])
            k += 1
    return buf.getvalue()


def data_from_csv(text: str):
    """Inverse of :func:`data_to_csv`: returns ``(y, sensors, times)``."""
    rows = [r for r in csv.DictReader(line for line in text.splitlines() if not line.startswith("#"))]
    y = np.array([float(r["value"]) for r in rows])
    times = tuple(dict.fromkeys(float(r["time"]) for r in rows))
    sensors = tuple(dict.fromkeys((float(r["sensor_x"]), float(r["sensor_y"])) for r in rows))
    if len(times) * len(sensors) != len(y):
        raise ValueError("data file is not a full (time x sensor) table")
    return y, sensors, times


def diffusion_model(y, case="corners", n=25, **problem_kw) -> JointDensityModel:
    """Uniform prior on the source location, ``N(-1, 1)`` prior on the log noise."""
    problem = DiffusionProblem(n=n, sensors=SENSOR_LAYOUTS[case], **problem_kw)
    return JointDensityModel(
        DiffusionForward(problem),
        IsoGaussianLikelihood(),
        UniformBoxPrior([0.0, 0.0], [1.0, 1.0]),
        GaussianPrior([-1.0], 1.0),
        y,
    )


def mirror_jump(omega) -> np.ndarray:
    """Reflect the source across ``x = 1/2``; maps one mode of the midpoint case onto the other."""
    out = np.array(omega, dtype=float)
    out[0] = 1.0 - out[0]
    return out
