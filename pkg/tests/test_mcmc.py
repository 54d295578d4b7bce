import json

import numpy as np
import pytest

from varinverse.joint import GaussianPrior, JointDensityModel, LinearForward, UniformBoxPrior
from varinverse.mcmc import MalaConfig, SamplerError, log_accept_ratio, mala_sample

from test_fit import TwoWellLikelihood
from test_joint import ConstantLikelihood, sine_model


def normal_target(d=2):
    return JointDensityModel(LinearForward(np.eye(d)), ConstantLikelihood(),
                             GaussianPrior(np.zeros(d), 1.0), None, np.zeros(d))


def batch_means_se(x, n_batches=30):
    """MC standard error of the mean of a correlated series."""
    usable = len(x) - len(x) % n_batches
    means = x[:usable].reshape(n_batches, -1).mean(axis=1)
    return means.std(ddof=1) / np.sqrt(n_batches)


@pytest.fixture(scope="module")
def default_chain():
    return mala_sample(normal_target(), np.zeros(2), MalaConfig(seed=0))


def test_standard_normal_moments(default_chain):
    s = default_chain.samples
    assert s.shape == ((100_000 - 1000) // 100, 2)
    for j in range(2):
        assert abs(s[:, j].mean()) < 3 * batch_means_se(s[:, j])
        assert abs(np.mean(s[:, j] ** 2) - 1.0) < 3 * batch_means_se(s[:, j] ** 2)


def test_small_step_accepts_almost_everything():
    cfg = MalaConfig(dt=1e-3, n_steps=20_000, burn_in=1000, thin=10, seed=1)
    chain = mala_sample(normal_target(), np.array([0.5, -0.5]), cfg)
    assert chain.acceptance_rate > 0.99


def test_lag_one_autocorrelation_after_thinning():
    chain = mala_sample(normal_target(), np.zeros(2), MalaConfig(dt=0.5, seed=2))
    s = chain.samples
    for j in range(2):
        assert abs(np.corrcoef(s[:-1, j], s[1:, j])[0, 1]) < 0.2


@pytest.mark.parametrize("seed", range(10))
def test_accept_ratio_antisymmetric(seed):
    model = sine_model(seed % 3)
    rng = np.random.default_rng(seed)
    x = np.append(rng.normal(size=3), -1.0)
    x_new = x + 0.3 * rng.normal(size=4)
    dt = rng.uniform(0.05, 0.5)
    forward = log_accept_ratio(model, x, x_new, dt)
    backward = log_accept_ratio(model, x_new, x, dt)
    assert forward == pytest.approx(-backward, abs=1e-10)


def test_seeded_determinism():
    cfg = MalaConfig(n_steps=5000, burn_in=500, thin=5, seed=3)
    a = mala_sample(sine_model(0), np.array([0.0, 0.0, 0.0, -1.0]), cfg)
    b = mala_sample(sine_model(0), np.array([0.0, 0.0, 0.0, -1.0]), cfg)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.acceptance_rate == b.acceptance_rate


def test_out_of_support_proposals_rejected():
    model = JointDensityModel(LinearForward(np.eye(2)), ConstantLikelihood(),
                              UniformBoxPrior([0, 0], [1, 1]), None, np.zeros(2))
    chain = mala_sample(model, np.array([0.5, 0.5]),
                        MalaConfig(dt=0.3, n_steps=5000, burn_in=100, thin=7, seed=4))
    assert np.all((chain.samples >= 0) & (chain.samples <= 1))
    assert 0.0 < chain.acceptance_rate < 1.0


def test_bad_start_and_config():
    model = JointDensityModel(LinearForward(np.eye(2)), ConstantLikelihood(),
                              UniformBoxPrior([0, 0], [1, 1]), None, np.zeros(2))
    with pytest.raises(SamplerError):
        mala_sample(model, np.array([2.0, 0.5]), MalaConfig(n_steps=2000))
    with pytest.raises(ValueError):
        MalaConfig(dt=0.0)
    with pytest.raises(ValueError):
        MalaConfig(n_steps=100, burn_in=100)
    with pytest.raises(ValueError):
        mala_sample(normal_target(), np.zeros(2), MalaConfig(p_jump=0.1, n_steps=2000))


def test_mirror_jump_visits_both_wells():
    mode = np.array([7.0, 1.0])
    model = JointDensityModel(LinearForward(np.eye(2)), TwoWellLikelihood(mode),
                              GaussianPrior(np.zeros(2), 100.0), None, np.zeros(2))
    cfg = MalaConfig(dt=0.8, n_steps=40_000, burn_in=1000, thin=20, seed=5)
    plain = mala_sample(model, mode, cfg)
    assert np.all(plain.samples[:, 0] > 0)  # the wells are too far apart for Langevin moves
    cfg.p_jump = 0.1
    jumped = mala_sample(model, mode, cfg, jump=lambda w: -w)
    frac = np.mean(jumped.samples[:, 0] > 0)
    assert jumped.n_jumps_accepted > 0
    assert 0.35 < frac < 0.65


def test_chain_serialization(default_chain):
    text = default_chain.to_csv(["a", "b"])
    lines = text.splitlines()
    assert lines[0] == "a,b" and len(lines) == default_chain.samples.shape[0] + 1
    assert float(lines[1].split(",")[0]) == default_chain.samples[0, 0]
    doc = json.loads(default_chain.summary_json())
    assert doc["n_samples"] == 990 and 0 <= doc["acceptance_rate"] <= 1
