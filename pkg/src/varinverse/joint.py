"""Log joint density ``J(omega) = log p(y | f(xi), theta) + log p(xi) + log p(theta)``.

The joint parameter vector is ``omega = (xi, theta)``: ``xi`` feeds the forward
model and ``theta`` the likelihood. Only the diagonal of the Hessian of ``J`` is
ever formed, which in turn only needs the diagonal second derivatives of the
forward model.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from typing import NamedTuple

import numpy as np

LOG_2PI = np.log(2.0 * np.pi)


class ForwardOutput(NamedTuple):
    """Forward-model bundle at one ``xi``.

    ``jac[s, j] = df_s/dxi_j`` and ``hess_diag[s, j] = d^2 f_s/dxi_j^2``; either is
    ``None`` when not requested.
    """

    f: np.ndarray
    jac: np.ndarray | None = None
    hess_diag: np.ndarray | None = None


class ForwardModel:
    """Base class for forward models ``f: R^dim_in -> R^dim_out``.

    Subclasses implement :meth:`evaluate`; ``order`` selects how many
    derivatives are returned (0, 1 or 2).
    """

    dim_in: int
    dim_out: int

    def evaluate(self, xi: np.ndarray, order: int = 2) -> ForwardOutput:
        raise NotImplementedError


class LinearForward(ForwardModel):
    """``f(xi) = A xi + b``. Mostly useful for conjugate checks."""

    def __init__(self, A, b=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.dim_out, self.dim_in = self.A.shape
        self.b = np.zeros(self.dim_out) if b is None else np.asarray(b, dtype=float)

    def evaluate(self, xi, order=2):
        f = self.A @ xi + self.b
        jac = self.A.copy() if order >= 1 else None
        hess = np.zeros_like(self.A) if order >= 2 else None
        return ForwardOutput(f, jac, hess)


class LikelihoodTerms(NamedTuple):
    """Value and partials of a log-likelihood ``L(y, f, theta)``.

    ``d2_ff`` is (d_y, d_y), ``d2_tt`` is (d_theta, d_theta) and ``d2_tf`` is
    (d_theta, d_y).
    """

    value: float
    d_f: np.ndarray
    d_theta: np.ndarray
    d2_ff: np.ndarray
    d2_tt: np.ndarray
    d2_tf: np.ndarray


class Likelihood:
    dim_theta: int = 0

    def terms(self, y: np.ndarray, f: np.ndarray, theta: np.ndarray) -> LikelihoodTerms:
        raise NotImplementedError

    def sample(self, f: np.ndarray, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class IsoGaussianLikelihood(Likelihood):
    """``log N(y | f, exp(2 theta) I)`` with ``theta`` the log noise standard deviation.

    If ``fixed_theta`` is given the noise level is known and ``theta`` is not part
    of ``omega`` (``dim_theta == 0``).
    """

    def __init__(self, fixed_theta: float | None = None):
        self.fixed_theta = fixed_theta
        self.dim_theta = 0 if fixed_theta is not None else 1

    def _theta(self, theta):
        return self.fixed_theta if self.fixed_theta is not None else float(theta[0])

    def terms(self, y, f, theta):
        th = self._theta(theta)
        r = y - f
        n = r.shape[0]
        rss = float(r @ r)
        inv_var = np.exp(-2.0 * th)
        value = -0.5 * n * LOG_2PI - n * th - 0.5 * rss * inv_var
        d_f = inv_var * r
        d2_ff = -inv_var * np.eye(n)
        if self.dim_theta == 0:
            empty = np.zeros(0)
            return LikelihoodTerms(value, d_f, empty, d2_ff, np.zeros((0, 0)), np.zeros((0, n)))
        # derivatives with respect to theta itself, not sigma = exp(theta)
        d_theta = np.array([rss * inv_var - n])
        d2_tt = np.array([[-2.0 * rss * inv_var]])
        d2_tf = (-2.0 * inv_var * r)[None, :]
        return LikelihoodTerms(value, d_f, d_theta, d2_ff, d2_tt, d2_tf)

    def sample(self, f, theta, rng):
        return f + np.exp(self._theta(theta)) * rng.standard_normal(f.shape)


class PriorTerms(NamedTuple):
    value: float
    grad: np.ndarray
    hess_diag: np.ndarray


class Prior:
    """Factorized prior over one block of ``omega``."""

    dim: int

    def terms(self, x: np.ndarray) -> PriorTerms:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        raise NotImplementedError


class GaussianPrior(Prior):
    """Independent normals ``N(mean_j, variance_j)``."""

    def __init__(self, mean, variance):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.variance = np.broadcast_to(
            np.asarray(variance, dtype=float), self.mean.shape
        ).copy()
        if np.any(self.variance <= 0):
            raise ValueError("prior variance must be positive")
        self.dim = self.mean.shape[0]

    def terms(self, x):
        z = x - self.mean
        value = -0.5 * np.sum(LOG_2PI + np.log(self.variance) + z**2 / self.variance)
        return PriorTerms(float(value), -z / self.variance, -1.0 / self.variance)

    def sample(self, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        return self.mean + np.sqrt(self.variance) * rng.standard_normal(shape)


class UniformBoxPrior(Prior):
    """Uniform density on the box ``[lo, hi]``; ``-inf`` outside."""

    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.lo >= self.hi):
            raise ValueError("need lo < hi componentwise")
        self.dim = self.lo.shape[0]
        self._log_volume = float(np.sum(np.log(self.hi - self.lo)))

    def terms(self, x):
        zeros = np.zeros(self.dim)
        if np.any(x < self.lo) or np.any(x > self.hi):
            return PriorTerms(-np.inf, zeros, zeros.copy())
        return PriorTerms(-self._log_volume, zeros, zeros.copy())

    def sample(self, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.uniform(self.lo, self.hi, size=shape)


class FlatPrior(Prior):
    """Constant zero log density; used to switch a block off in tests."""

    def __init__(self, dim):
        self.dim = dim

    def terms(self, x):
        return PriorTerms(0.0, np.zeros(self.dim), np.zeros(self.dim))


class JointEval(NamedTuple):
    """``J``, its gradient and the diagonal of its Hessian at one point.

    ``value == -inf`` marks a point outside the prior support; the derivative
    arrays are zero there and must not be used.
    """

    value: float
    grad: np.ndarray | None
    hess_diag: np.ndarray | None

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.value))


class JointDensityModel:
    """Forward model + likelihood + priors, giving ``J(omega)`` and derivatives.

    Forward-model calls are cached per ``xi`` (keyed by the exact bytes), so a
    change of ``theta`` alone does not trigger a new solve. ``n_forward`` counts
    forward bundles actually computed.
    """

    def __init__(
        self,
        forward: ForwardModel,
        likelihood: Likelihood,
        prior_xi: Prior,
        prior_theta: Prior | None,
        y,
        cache_size: int = 64,
    ):
        self.forward = forward
        self.likelihood = likelihood
        self.prior_xi = prior_xi
        self.prior_theta = prior_theta if prior_theta is not None else FlatPrior(0)
        self.y = np.asarray(y, dtype=float)
        self.d_xi = forward.dim_in
        self.d_theta = likelihood.dim_theta
        if prior_xi.dim != self.d_xi or self.prior_theta.dim != self.d_theta:
            raise ValueError("prior dimensions do not match the forward model / likelihood")
        if self.y.shape != (forward.dim_out,):
            raise ValueError(f"data has shape {self.y.shape}, forward model gives {forward.dim_out}")
        self.n_forward = 0
        self._cache: OrderedDict[bytes, tuple[int, ForwardOutput]] = OrderedDict()
        self._cache_size = cache_size
        self._lock = threading.Lock()

    @property
    def dim(self) -> int:
        return self.d_xi + self.d_theta

    def split(self, omega):
        omega = np.asarray(omega, dtype=float)
        return omega[: self.d_xi], omega[self.d_xi :]

    def forward_eval(self, xi, order=2) -> ForwardOutput:
        xi = np.ascontiguousarray(xi, dtype=float)
        key = xi.tobytes()
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None and hit[0] >= order:
                self._cache.move_to_end(key)
                return hit[1]
        out = self.forward.evaluate(xi, order)
        with self._lock:
            self.n_forward += 1
            self._cache[key] = (order, out)
            self._cache.move_to_end(key)
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return out

    def __call__(self, omega, order: int = 2) -> JointEval:
        """Evaluate ``J`` at ``omega``; ``order`` 0, 1 or 2 as for forward models."""
        xi, theta = self.split(omega)
        pxi = self.prior_xi.terms(xi)
        pth = self.prior_theta.terms(theta)
        d = self.dim
        if not (np.isfinite(pxi.value) and np.isfinite(pth.value)):
            return JointEval(-np.inf, np.zeros(d), np.zeros(d))
        fwd = self.forward_eval(xi, order)
        lk = self.likelihood.terms(self.y, fwd.f, theta)
        value = lk.value + pxi.value + pth.value
        if order == 0:
            return JointEval(value, None, None)

        grad = np.empty(d)
        grad[: self.d_xi] = fwd.jac.T @ lk.d_f + pxi.grad
        grad[self.d_xi :] = lk.d_theta + pth.grad
        if order == 1:
            return JointEval(value, grad, None)

        hess = np.empty(d)
        # diag of G^T L_ff G, plus the curvature of f weighted by dL/df
        hess[: self.d_xi] = (
            np.einsum("rj,rs,sj->j", fwd.jac, lk.d2_ff, fwd.jac)
            + fwd.hess_diag.T @ lk.d_f
            + pxi.hess_diag
        )
        hess[self.d_xi :] = np.diag(lk.d2_tt) + pth.hess_diag
        return JointEval(value, grad, hess)

    def mixed_xi_theta(self, omega) -> np.ndarray:
        """Cross block ``d^2 J / dxi_j dtheta_k``, shape (d_xi, d_theta).

        Not needed with diagonal covariances; provided for completeness.
        """
        xi, theta = self.split(omega)
        fwd = self.forward_eval(xi, 1)
        lk = self.likelihood.terms(self.y, fwd.f, theta)
        return fwd.jac.T @ lk.d2_tf.T

    def sample_prior(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` points of ``omega`` from the prior, shape (size, dim)."""
        xi = self.prior_xi.sample(rng, size)
        theta = self.prior_theta.sample(rng, size) if self.d_theta else np.zeros((size, 0))
        return np.hstack([xi, theta])
