import numpy as np
import pytest

from varinverse.diffusion import (
    CORNERS,
    MIDPOINTS,
    DiffusionForward,
    DiffusionProblem,
    data_from_csv,
    data_to_csv,
    diffusion_forward,
    diffusion_model,
    make_synthetic_data,
    mirror_jump,
)

from conftest import central_diff, rel_err, second_diff

INTERIOR = [(0.3, 0.4), (0.5, 0.5), (0.7, 0.25), (0.2, 0.8)]


def test_zero_source_gives_zero_field():
    p = DiffusionProblem(n=12, strength=0.0)
    np.testing.assert_array_equal(p.fv_solve([0.3, 0.6]), 0.0)


@pytest.mark.parametrize("xi", [(0.3, 0.4), (0.09, 0.23)])
def test_discrete_mass_balance(xi):
    p = DiffusionProblem(n=20)
    u_end = p.fv_solve(xi)[-1, 0]
    injected = p.source_terms(xi, ("value",))[0].sum() * p.h**2 * p.dt * round(p.shutoff / p.dt)
    assert abs(u_end.sum() * p.h**2 - injected) / injected < 1e-10


def test_mirror_symmetry_of_fields():
    p = DiffusionProblem(n=21)
    a = p.fv_solve([0.3, 0.4], ("value", "d_y", "d2_x", "d2_y"))
    b = p.fv_solve([0.7, 0.4], ("value", "d_y", "d2_x", "d2_y"))
    assert np.max(np.abs(a - b[..., ::-1])) < 1e-12


@pytest.mark.parametrize("xi1", [0.1, 0.3, 0.42])
def test_midpoint_readings_cannot_tell_left_from_right(xi1):
    a = diffusion_forward(np.array([xi1, 0.35]), "midpoints", n=16, order=0).f
    b = diffusion_forward(np.array([1 - xi1, 0.35]), "midpoints", n=16, order=0).f
    assert np.max(np.abs(a - b)) < 1e-12


@pytest.mark.parametrize("case", ["corners", "midpoints"])
@pytest.mark.parametrize("xi", [(0.3, 0.4), (0.62, 0.71), (0.09, 0.23)])
def test_derivatives_match_finite_differences(case, xi):
    xi = np.array(xi)
    out = diffusion_forward(xi, case, n=15)
    f = lambda x: diffusion_forward(x, case, n=15, order=0).f
    assert rel_err(out.jac, central_diff(f, xi, 1e-4)) < 1e-3
    assert rel_err(out.hess_diag, second_diff(f, xi, 1e-4)) < 1e-3


@pytest.mark.parametrize("case", ["corners", "midpoints"])
@pytest.mark.parametrize("xi", INTERIOR)
def test_grid_refinement(case, xi):
    a = diffusion_forward(np.array(xi), case, n=25, order=0).f
    b = diffusion_forward(np.array(xi), case, n=50, order=0).f
    assert np.max(np.abs(a - b) / np.abs(b)) < 0.02


@pytest.mark.parametrize("xi", [(0.3, 0.4), (0.16, 0.84), (0.09, 0.23)])
def test_sensitivity_mass_is_derivative_of_injected_mass(xi):
    # the scheme conserves mass, so only the truncated part of the bump can move it
    p = DiffusionProblem(n=25)
    fields = p.fv_solve(xi, ("d_x", "d_y"))[-1]
    mass = fields.sum(axis=(1, 2)) * p.h**2
    steps = round(p.shutoff / p.dt)
    injected = lambda x: p.source_terms(x, ("value",))[0].sum() * p.h**2 * p.dt * steps
    np.testing.assert_allclose(mass, central_diff(injected, np.array(xi), 1e-6), rtol=1e-5, atol=1e-10)  # FD noise floor


@pytest.mark.parametrize("xi", [(0.3, 0.4), (0.5, 0.5), (0.2, 0.8), (0.8, 0.21)])
def test_sensitivity_fields_carry_no_mass_away_from_boundary(xi):
    p = DiffusionProblem(n=25)
    fields = p.fv_solve(xi, ("d_x", "d_y"))[-1]
    assert np.all(np.abs(fields.sum(axis=(1, 2)) * p.h**2) < 1e-3)


def test_readings_nonnegative_and_shapes():
    for case, k in (("corners", 16), ("midpoints", 8)):
        out = diffusion_forward(np.array([0.09, 0.23]), case, n=25)
        assert out.f.shape == (k,) and out.jac.shape == (k, 2) and out.hess_diag.shape == (k, 2)
        assert out.f.min() > -1e-10


def test_outside_domain_rejected():
    with pytest.raises(ValueError):
        diffusion_forward(np.array([1.2, 0.5]), "corners", n=10)


def test_invalid_problem_settings():
    with pytest.raises(ValueError):
        DiffusionProblem(times=(0.1, 0.0751))
    with pytest.raises(ValueError):
        DiffusionProblem(n=1)


def test_forward_is_deterministic():
    a = diffusion_forward(np.array([0.4, 0.3]), "corners", n=12)
    b = diffusion_forward(np.array([0.4, 0.3]), "corners", n=12)
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


def test_sensor_interpolation_reads_corner_cell():
    p = DiffusionProblem(n=8, sensors=CORNERS)
    field = np.arange(64.0).reshape(1, 1, 8, 8)
    np.testing.assert_array_equal(p.sample(field)[0, 0], [0.0, 7.0, 56.0, 63.0])
    mid = DiffusionProblem(n=8, sensors=MIDPOINTS)
    np.testing.assert_allclose(mid.sample(field)[0, 0], [3.5, 59.5])


def test_synthetic_data_recipe():
    y0, clean = make_synthetic_data("corners", sigma=0.0, n=20)
    np.testing.assert_array_equal(y0, clean)
    np.testing.assert_array_equal(clean, diffusion_forward(np.array([0.09, 0.23]), "corners", 20, 0).f)
    a, _ = make_synthetic_data("corners", n=20, seed=4)
    b, _ = make_synthetic_data("corners", n=20, seed=4)
    np.testing.assert_array_equal(a, b)
    c, _ = make_synthetic_data("corners", n=20, seed=5)
    assert not np.array_equal(a, c)


def test_csv_round_trip():
    p = DiffusionProblem(n=10, sensors=MIDPOINTS)
    y = np.random.default_rng(0).normal(size=8)
    back, sensors, times = data_from_csv("# comment\n" + data_to_csv(y, p))
    np.testing.assert_array_equal(back, y)
    assert sensors == MIDPOINTS and times == p.times


def test_model_prior_and_mirror_jump():
    y, _ = make_synthetic_data("midpoints", n=20)
    model = diffusion_model(y, "midpoints", n=10)
    assert model.dim == 3
    assert model([1.1, 0.5, -1.0]).value == -np.inf
    w = np.array([0.2, 0.7, -2.0])
    np.testing.assert_allclose(mirror_jump(mirror_jump(w)), w, atol=1e-15)
    assert model(w, 0).value == pytest.approx(model(mirror_jump(w), 0).value, abs=1e-10)
