import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lossyalloc.objectives import (
    LocalObjective,
    NonlinearMap,
    ObjectiveArrays,
    SectorViolation,
    curvature_bound,
    map_eval,
    objective_eval,
    random_objectives,
    sector_bounds,
)

SHIPPED = [
    NonlinearMap("identity"),
    NonlinearMap("cubic"),
    NonlinearMap("signum-power", v1=0.5, v2=1.5),
    NonlinearMap("log-quantizer", rho=1 / 256),
    NonlinearMap("log-quantizer", rho=math.log(2)),
    NonlinearMap("uniform-quantizer", rho=0.5),
]
SIGN_PRESERVING = [g for g in SHIPPED if g.kind != "uniform-quantizer"]
reals = st.floats(-50, 50, allow_nan=False)


# maps -------------------------------------------------------------------------

@pytest.mark.parametrize("g,z,expected", [
    (NonlinearMap("log-quantizer", rho=0.3), 1.0, 1.0),
    (NonlinearMap("log-quantizer", rho=math.log(2)), 3.0, 4.0),
    (NonlinearMap("cubic"), -2.0, -10.0),
    (NonlinearMap("uniform-quantizer", rho=0.5), 0.7, 0.5),
])
def test_map_examples(g, z, expected):
    assert map_eval(g, z) == pytest.approx(expected, rel=1e-15)


def test_uniform_quantizer_rounds_half_away_from_zero():
    g = NonlinearMap("uniform-quantizer", rho=1.0)
    assert g(np.array([0.5, -0.5, 1.5, -2.5])).tolist() == [1.0, -1.0, 2.0, -3.0]


@pytest.mark.parametrize("g", SHIPPED, ids=lambda g: g.kind)
def test_maps_fix_zero(g):
    assert g(0.0) == 0.0


@pytest.mark.parametrize("g", SHIPPED, ids=lambda g: g.kind)
@given(z=reals)
def test_maps_are_odd(g, z):
    assert g(-z) == -g(z)


@pytest.mark.parametrize("g", SIGN_PRESERVING, ids=lambda g: g.kind)
@given(z=reals.filter(lambda v: v != 0))
def test_maps_are_strongly_sign_preserving(g, z):
    # compare signs rather than the product, which underflows for tiny z
    assert np.sign(g(z)) == np.sign(z)


@pytest.mark.parametrize("g", SIGN_PRESERVING, ids=lambda g: g.kind)
@given(Z=st.floats(0.01, 20), frac=st.floats(1e-6, 1))
def test_sector_containment(g, Z, frac):
    kappa, K = sector_bounds(g, Z)
    z = Z * frac
    r = g(z) / z
    assert kappa * (1 - 1e-12) <= r <= K * (1 + 1e-12)


def test_sector_bounds_examples():
    assert sector_bounds(NonlinearMap(), 3.0) == (1.0, 1.0)
    kappa, K = sector_bounds(NonlinearMap("log-quantizer", rho=1 / 256), 1.0)
    # half a level on either side of the log grid
    assert kappa == pytest.approx(math.exp(-1 / 512), rel=1e-12)
    assert K == pytest.approx(math.exp(1 / 512), rel=1e-12)
    assert kappa == pytest.approx(0.998047, abs=2e-6)
    assert K == pytest.approx(1.001955, abs=1e-6)
    assert round(kappa, 3) == 0.998 and round(K, 3) == 1.002
    assert sector_bounds(NonlinearMap("cubic"), math.sqrt(146)) == (1.0, pytest.approx(147.0))


def test_sector_bounds_reject_dead_zone():
    with pytest.raises(SectorViolation) as err:
        sector_bounds(NonlinearMap("uniform-quantizer", rho=0.5), 1.0)
    assert abs(err.value.z) < 0.25


def test_sector_bounds_domain():
    with pytest.raises(ValueError):
        sector_bounds(NonlinearMap(), 0.0)


@pytest.mark.parametrize("kwargs", [
    {"kind": "tanh"},
    {"kind": "log-quantizer"},
    {"kind": "uniform-quantizer", "rho": 0},
    {"kind": "signum-power", "v1": 1.0},
])
def test_map_validation(kwargs):
    with pytest.raises(ValueError):
        NonlinearMap(**kwargs)


# objectives ---------------------------------------------------------------------

def test_objective_examples():
    assert objective_eval(LocalObjective(a=1, c=0), 2.0) == (2.0, 2.0)
    val, grad = objective_eval(LocalObjective(a=1, c=0, kind="quad-logexp", l=0, d=0), 3.0)
    assert val == pytest.approx(4.5 + math.log(2), rel=1e-15)
    assert grad == 3.0
    assert objective_eval(LocalObjective(a=1, c=0, box=(0, 1), gamma=1), 2.0) == (3.0, 4.0)


def test_objective_below_box_penalty():
    f = LocalObjective(a=2, c=1, box=(0, 5), gamma=3)
    val, grad = objective_eval(f, -1.0)
    assert val == pytest.approx(0.5 * 2 * 4 + 3 * 1)
    assert grad == pytest.approx(2 * -2 - 2 * 3 * 1)


def test_logexp_is_overflow_safe():
    f = LocalObjective(a=1, c=0, kind="quad-logexp", l=50, d=0)
    val, grad = objective_eval(f, 1e3)
    assert math.isfinite(val) and val == pytest.approx(0.5e6 + 5e4)
    assert grad == pytest.approx(1e3 + 50)
    val, grad = objective_eval(f, -1e3)
    assert val == pytest.approx(0.5e6) and grad == pytest.approx(-1e3)


objectives = st.builds(
    LocalObjective,
    a=st.floats(0.1, 3),
    c=st.floats(-5, 5),
    kind=st.sampled_from(["quadratic", "quad-logexp"]),
    l=st.floats(0, 2),
    d=st.floats(-5, 5),
    box=st.one_of(st.none(), st.tuples(st.floats(-5, 0), st.floats(0.1, 5))),
    gamma=st.floats(0, 3),
)


def _away_from_kinks(f, x, h):
    return f.box is None or all(abs(x - edge) > 2 * h for edge in f.box)


@given(objectives, st.floats(-8, 8))
def test_gradient_matches_central_differences(f, x):
    h = 1e-6
    if not _away_from_kinks(f, x, h):
        return
    fd = (f.value(x + h) - f.value(x - h)) / (2 * h)
    assert f.gradient(x) == pytest.approx(fd, rel=1e-5, abs=1e-6)


@given(objectives, st.floats(-8, 8))
def test_hessian_matches_gradient_differences(f, x):
    h = 1e-5
    if not _away_from_kinks(f, x, h):
        return
    fd = (f.gradient(x + h) - f.gradient(x - h)) / (2 * h)
    assert f.hessian(x) == pytest.approx(fd, rel=1e-4, abs=1e-5)


def test_objective_validation():
    with pytest.raises(ValueError):
        LocalObjective(a=0)
    with pytest.raises(ValueError):
        LocalObjective(a=1, kind="cubic")
    with pytest.raises(ValueError):
        LocalObjective(a=1, box=(3, 2))
    with pytest.raises(ValueError):
        LocalObjective(a=1, gamma=-1)


def test_objective_arrays_match_scalar_evaluation(rng):
    objs = random_objectives(12, rng, box=(2, 7))
    arr = ObjectiveArrays.stack(objs)
    x = rng.uniform(0, 9, 12)
    vals, grads = arr.evaluate(x)
    for i, f in enumerate(objs):
        assert (vals[i], grads[i]) == objective_eval(f, x[i])
    assert arr.total(x) == pytest.approx(sum(vals))


def test_random_objectives_respect_ranges_and_seed():
    objs = random_objectives(50, 7, kind="quad-logexp")
    assert all(0.5 <= f.a <= 1.5 and 2 <= f.c <= 7 and 0 <= f.l <= 0.5 and 2 <= f.d <= 7 for f in objs)
    assert objs == random_objectives(50, 7, kind="quad-logexp")


def test_curvature_bound_is_strict_on_grid(rng):
    objs = random_objectives(10, rng)
    u = curvature_bound(objs, 2, 7)
    grid = np.linspace(2, 7, 5001)
    assert all(np.all(f.hessian(grid) < 2 * u) for f in objs)
    # the logistic curvature peak l^2/4 is attained at x = d
    f = LocalObjective(a=1, kind="quad-logexp", l=2, d=3.3)
    assert curvature_bound([f], 0, 10) == pytest.approx(0.5 * (1 + 1), rel=1e-8)
