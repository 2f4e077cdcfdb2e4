import numpy as np
import pytest
from hypothesis import given, strategies as st

from porous_pinn.diffnet import Activation, FieldSample, NetworkParams, NetworkSpec
from porous_pinn.errors import ConfigurationError
from porous_pinn.physics import (
    CostFunction,
    CostWeights,
    FieldTriple,
    PointSets,
    ProblemConfig,
    all_residuals,
    assemble_cost,
    boundary_residuals,
    default_specs,
    init_triple,
    mixed_viscosity,
    pde_residuals,
)
from porous_pinn.sampling import grid_point_sets

CFG = ProblemConfig()


def sample(value, d_dx=0.0, d_dt=0.0):
    return FieldSample(np.atleast_1d(float(value)), np.atleast_1d(float(d_dx)), np.atleast_1d(float(d_dt)))


def test_reference_problem_defaults():
    assert (CFG.l, CFG.T, CFG.k, CFG.mu2, CFG.mu1, CFG.p_in, CFG.p_out) == (1, 0.5, 1, 1, 1e-5, 1, 0)


@pytest.mark.parametrize("key", ["l", "T", "k", "mu1", "mu2"])
def test_invalid_problem_values_name_key(key):
    with pytest.raises(ConfigurationError) as exc:
        ProblemConfig(**{key: -1.0})
    assert exc.value.key == key


def test_pressure_drop_must_be_positive():
    with pytest.raises(ConfigurationError):
        ProblemConfig(p_in=0.0, p_out=0.0)


def test_mixed_viscosity_endpoints_and_midpoint():
    assert mixed_viscosity(0.0, CFG) == 1e-5
    assert mixed_viscosity(1.0, CFG) == 1.0
    assert mixed_viscosity(0.5, CFG) == pytest.approx(0.500005, rel=1e-15)


@given(st.floats(0, 1))
def test_mixed_viscosity_bounded(c):
    mu = mixed_viscosity(c, CFG)
    assert min(CFG.mu1, CFG.mu2) <= mu <= max(CFG.mu1, CFG.mu2)


def test_manufactured_exact_solution_has_zero_residuals():
    v, c_val = 0.7, 0.3
    mu = mixed_viscosity(c_val, CFG)
    f1, f2, f3 = pde_residuals(sample(v), sample(0.2, d_dx=-v * mu / CFG.k), sample(c_val), CFG)
    assert f1[0] == 0 and f3[0] == 0
    assert f2[0] == pytest.approx(0, abs=1e-15)


def test_f1_arithmetic():
    f1, _, _ = pde_residuals(sample(2.0), sample(0.0), sample(0.5, d_dx=3.0, d_dt=1.0), CFG)
    assert f1[0] == 7.0


def test_f2_zero_in_displaced_fluid():
    _, f2, _ = pde_residuals(sample(1.0), sample(0.5, d_dx=-CFG.mu1 / CFG.k), sample(0.0), CFG)
    assert f2[0] == pytest.approx(0.0, abs=1e-12)


@given(st.floats(-10, 10), st.floats(-5, 5), st.floats(0, 1), st.floats(-3, 3))
def test_f2_linear_in_pressure_gradient(alpha, px, c, v):
    _, f2, _ = pde_residuals(sample(v), sample(0.5, d_dx=alpha * px), sample(c), CFG)
    expected = v + CFG.k / mixed_viscosity(c, CFG) * alpha * px
    assert f2[0] == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_pde_residuals_pure():
    args = (sample(0.4, 0.1), sample(0.3, -0.2), sample(0.6, 0.5, 0.7), CFG)
    assert all(np.array_equal(a, b) for a, b in zip(pde_residuals(*args), pde_residuals(*args)))


# hand-built networks ---------------------------------------------------------

def affine_net(a_x, a_t, c0, out):
    """Network realising ``out(a_x x + a_t t + c0)`` exactly with linear hidden layer."""
    spec = NetworkSpec(hidden_layer_sizes=(2,), hidden_activation=Activation.LINEAR, output_activation=out)
    return NetworkParams(spec, [np.eye(2), np.array([[a_x, a_t]])], [np.zeros(2), np.array([c0])])


def logit(p):
    return np.log(p / (1 - p))


def constant_sigmoid_net(value):
    return affine_net(0.0, 0.0, logit(value), Activation.SIGMOID)


def sets_with(c_bc, p_bc, pts=None):
    pts = np.array([[0.5, 0.25]]) if pts is None else pts
    return PointSets(pts, pts, pts, c_bc, p_bc)


def test_boundary_residuals_constant_fraction():
    c_one = constant_sigmoid_net(1 - 1e-12)
    triple = FieldTriple(affine_net(0, 0, 0, Activation.LINEAR), constant_sigmoid_net(0.5), c_one)
    sets = grid_point_sets(CFG, 5, 5)
    r_c, r_p, r_v = boundary_residuals(triple, sets, CFG)
    inlet = sets.c_bc[:, 0] == 0
    np.testing.assert_allclose(r_c[inlet], 0, atol=1e-11)
    np.testing.assert_allclose(r_c[~inlet], 1, atol=1e-11)
    assert len(r_v) == 0


def test_boundary_residual_zero_for_linear_pressure_profile():
    # residual definition r_p = p - p_b, with p(x) = p_in + (p_out - p_in) x / l realised
    # by a linear-output net (the sigmoid restriction is a FieldTriple rule, not a residual one)
    p_lin = affine_net((CFG.p_out - CFG.p_in) / CFG.l, 0.0, CFG.p_in, Activation.LINEAR)
    sets = grid_point_sets(CFG, 6, 6)
    triple = FieldTriple(affine_net(0, 0, 0, Activation.LINEAR), p_lin, constant_sigmoid_net(0.5), check=False)
    _, r_p, _ = boundary_residuals(triple, sets, CFG)
    np.testing.assert_allclose(r_p, 0, atol=1e-15)


def test_field_triple_output_activations_enforced():
    lin = affine_net(0, 0, 0, Activation.LINEAR)
    with pytest.raises(ConfigurationError):
        FieldTriple(lin, lin, lin)


# cost ------------------------------------------------------------------------

def exact_triple(v=1.0, c=0.5):
    """Uniform flow with constant fraction c and the matching linear pressure (linear output)."""
    mu = mixed_viscosity(c, CFG)
    return FieldTriple(
        affine_net(0, 0, v, Activation.LINEAR),
        affine_net(-v * mu / CFG.k, 0, 0.5, Activation.LINEAR),
        constant_sigmoid_net(c),
        check=False,
    )


def test_all_zero_residuals_give_zero_cost():
    triple = exact_triple(c=0.5)
    pts = np.array([[0.2, 0.1], [0.7, 0.4]])
    c_bc = np.array([[0.0, 0.1, 0.5]])
    p_val = 0.5 - 1.0 * mixed_viscosity(0.5, CFG) * 0.3
    p_bc = np.array([[0.3, 0.2, p_val]])
    total, comps = assemble_cost(triple, sets_with(c_bc, p_bc, pts), CostWeights(), CFG)
    assert total == pytest.approx(0, abs=1e-24)
    assert all(v == pytest.approx(0, abs=1e-24) for v in comps.values())


def test_single_f1_residual_of_three_costs_nine():
    # c = sigmoid(a t + b): c_t = a c (1-c); choose a so that c_t = 3 at the point, v = 0
    c_val = 0.5
    a = 3.0 / (c_val * (1 - c_val))
    triple = FieldTriple(
        affine_net(0, 0, 0.0, Activation.LINEAR),
        affine_net(0, 0, 0.5, Activation.LINEAR),
        affine_net(0, a, -a * 0.25, Activation.SIGMOID),
        check=False,
    )
    pt = np.array([[0.5, 0.25]])
    sets = PointSets(pt, pt, pt, np.array([[0.5, 0.25, 0.5]]), np.array([[0.5, 0.25, 0.5]]))
    total, comps = assemble_cost(triple, sets, CostWeights(), CFG)
    assert comps["cost_f1"] == pytest.approx(9.0, rel=1e-12)
    assert total == pytest.approx(9.0, rel=1e-12)


def test_weights_scale_components_linearly():
    triple = init_triple(1, (6, 6))
    sets = grid_point_sets(CFG, 6, 6)
    t1, c1 = assemble_cost(triple, sets, CostWeights(), CFG)
    t2, c2 = assemble_cost(triple, sets, CostWeights(lambda_1=2.0), CFG)
    assert c1 == c2
    assert t2 - t1 == pytest.approx(c1["cost_f1"], rel=1e-12)
    assert all(v >= 0 for v in c1.values())


def test_empty_weighted_set_rejected():
    sets = PointSets(np.zeros((0, 2)), [[0.1, 0.1]], [[0.1, 0.1]], [[0, 0.1, 1]], [[0, 0.1, 1]])
    with pytest.raises(ConfigurationError):
        assemble_cost(init_triple(0, (4,)), sets, CostWeights(), CFG)
    # allowed when the weight is zero
    assemble_cost(init_triple(0, (4,)), sets, CostWeights(lambda_1=0.0), CFG)


def test_points_outside_domain_rejected():
    sets = PointSets([[1.5, 0.1]], [[0.1, 0.1]], [[0.1, 0.1]], [[0, 0.1, 1]], [[0, 0.1, 1]])
    with pytest.raises(ConfigurationError):
        sets.validate(CFG)


def test_cost_function_gradient_vs_finite_differences():
    cfg = ProblemConfig(mu1=0.2)
    rng = np.random.default_rng(3)

    def pts(n):
        return np.column_stack([rng.uniform(0, 1, n), rng.uniform(0, 0.5, n)])

    sets = PointSets(
        pts(6), pts(7), pts(5),
        np.column_stack([pts(4), rng.uniform(0, 1, 4)]),
        np.column_stack([pts(4), rng.uniform(0, 1, 4)]),
    )
    specs = default_specs((5, 4))
    cost = CostFunction(specs, sets, CostWeights(lambda_c=0.7, lambda_2=1.3), cfg)
    theta = init_triple(2, (5, 4)).flatten()
    total, grad, comps = cost.value_and_grad(theta)
    assert total == pytest.approx(cost.value(theta)[0], rel=1e-14)
    h = 1e-5
    fd = np.array([
        (cost.value(theta + h * e)[0] - cost.value(theta - h * e)[0]) / (2 * h)
        for e in np.eye(theta.size)
    ])
    rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-6)
    assert rel.max() < 1e-5


def test_residual_keys_and_lengths():
    sets = grid_point_sets(CFG, 5, 4)
    res = all_residuals(init_triple(0, (4,)), sets, CFG)
    assert {k: len(v) for k, v in res.items()} == {
        "f1": 20, "f2": 20, "f3": 20, "c": len(sets.c_bc), "p": len(sets.p_bc), "v": 0
    }
