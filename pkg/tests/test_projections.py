import math

import numpy as np
import pytest
from scipy.stats import kstest

from ldplab.densities import sigma_p_squared
from ldplab.errors import DimensionMismatch, DomainError, UnsupportedLaw
from ldplab.linalg import ColumnList
from ldplab.projections import (
    CustomLaw,
    EmpiricalMeasure,
    ProjectedLaw,
    RademacherLaw,
    characteristic_function,
    compare_ball_vs_product,
    empirical_cf,
    law_char_fn,
    levy_prokhorov,
    project_lp_ball,
    project_product,
    sample_projected_law,
)
from ldplab.samplers import PGaussianParams, SeededRng, haar_stiefel


def columns(dim, arr):
    arr = np.asarray(arr, dtype=float)
    if arr.size == 0:
        return ColumnList.empty(dim)
    return ColumnList.from_columns(dim, arr)


def test_projected_law_pure_gaussian():
    law = ProjectedLaw(a=ColumnList.empty(2), noise_variance=1.0,
                       product_law=PGaussianParams(1.0))
    cloud = sample_projected_law(SeededRng(1), law, 10**4)
    assert cloud.dim == 2
    assert np.allclose(cloud.points.var(axis=0), 1.0, atol=0.05)


def test_projected_law_degenerate_gaussian_part():
    law = ProjectedLaw(a=columns(1, [[1.0]]), noise_variance=1.0 / 3.0,
                       product_law=PGaussianParams(math.inf))
    cloud = sample_projected_law(SeededRng(2), law, 10**4)
    stat = kstest(cloud.points[:, 0], lambda x: np.clip((np.asarray(x) + 1) / 2, 0, 1)).statistic
    assert stat < 1.63 / math.sqrt(10**4)
    assert np.max(np.abs(cloud.points)) <= 1.0


def test_projected_law_covariance():
    a = columns(2, [[0.5, 0.1], [0.0, 0.4]])
    sigma_y2 = sigma_p_squared(1.0)
    law = ProjectedLaw(a=a, noise_variance=1.0, product_law=PGaussianParams(1.0))
    cloud = sample_projected_law(SeededRng(3), law, 4 * 10**4)
    aat = a.matrix() @ a.matrix().T
    expected = sigma_y2 * aat + 1.0 * (np.eye(2) - aat)
    sample_cov = np.cov(cloud.points.T)
    assert np.allclose(sample_cov, expected, atol=0.05)


def test_projected_law_norm_bound():
    with pytest.raises(DomainError):
        ProjectedLaw(a=columns(2, [[0.9, 0.9], [0.0, 0.0]]), noise_variance=1.0,
                     product_law=PGaussianParams(2.0))
    with pytest.raises(ValueError):
        columns(1, [[1.2]])  # single column already violates the norm cap


def test_project_product_gaussian_case():
    v = haar_stiefel(SeededRng(4), 2, 30)
    cloud = project_product(SeededRng(5), v, PGaussianParams(2.0), 2 * 10**4)
    assert np.allclose(cloud.points.var(axis=0), 1.0, atol=0.03)
    stat = kstest(cloud.points[:, 0], "norm").statistic
    assert stat < 1.63 / math.sqrt(cloud.count)


def test_project_product_identity_frame():
    v = np.eye(4)[:2, :]
    cloud = project_product(SeededRng(6), v, PGaussianParams(1.0), 10**5)
    stderr = 3 / math.sqrt(cloud.count)
    assert abs(np.mean(np.abs(cloud.points[:, 0])) - 1.0) < 3 * stderr


def test_project_product_covariance():
    v = haar_stiefel(SeededRng(7), 2, 40)
    law = PGaussianParams(1.5)
    cloud = project_product(SeededRng(8), v, law, 4 * 10**4)
    target = sigma_p_squared(1.5) * np.eye(2)
    assert np.allclose(np.cov(cloud.points.T), target, atol=0.05)


def test_project_lp_ball_disc():
    cloud = project_lp_ball(SeededRng(9), np.eye(2), 2.0, 5000)
    norms = np.linalg.norm(cloud.points, axis=1)
    assert np.max(norms) <= math.sqrt(2.0) + 1e-12
    assert np.allclose(cloud.points.mean(axis=0), 0.0, atol=0.05)


def test_project_lp_ball_variance_converges():
    v = haar_stiefel(SeededRng(10), 1, 500)
    cloud = project_lp_ball(SeededRng(11), v, 1.0, 2 * 10**4)
    assert abs(cloud.points.var() - sigma_p_squared(1.0)) < 0.05 * sigma_p_squared(1.0)


def test_projected_law_isotropic_when_sigma_matches():
    # with sigma^2 = Var(Y), the covariance collapses to sigma^2 I
    a = columns(2, [[0.5, 0.1], [0.0, 0.4]])
    var = sigma_p_squared(math.inf)
    law = ProjectedLaw(a=a, noise_variance=var,
                       product_law=PGaussianParams(math.inf))
    cloud = sample_projected_law(SeededRng(23), law, 4 * 10**4)
    assert np.allclose(np.cov(cloud.points.T), var * np.eye(2), atol=0.02)


def test_project_product_p2_exact_for_any_frame():
    # Gaussian product law: V Z is exactly N(0, I_k) for every frame,
    # including tiny n
    v = haar_stiefel(SeededRng(24), 1, 3)
    cloud = project_product(SeededRng(25), v, PGaussianParams(2.0), 2 * 10**4)
    stat = kstest(cloud.points[:, 0], "norm").statistic
    assert stat < 1.63 / math.sqrt(cloud.count)


def test_levy_prokhorov_identical():
    pts = np.random.default_rng(12).standard_normal((500, 1))
    m = EmpiricalMeasure.from_points(pts)
    assert levy_prokhorov(m, m, grid=100) == 0.0


def test_levy_prokhorov_point_masses():
    a = EmpiricalMeasure.from_points(np.array([[0.0, 0.0]]))
    b = EmpiricalMeasure.from_points(np.array([[0.3, 0.0]]))
    d = levy_prokhorov(a, b, grid=400)
    assert abs(d - 0.3) < 1.0 / 400


def test_levy_prokhorov_gaussian_clouds():
    gen1 = np.random.default_rng(13)
    gen2 = np.random.default_rng(14)
    a = EmpiricalMeasure.from_points(gen1.standard_normal((10**4, 1)))
    b = EmpiricalMeasure.from_points(gen2.standard_normal((10**4, 1)))
    assert levy_prokhorov(a, b, grid=128) <= 0.05


def test_levy_prokhorov_symmetry_and_triangle():
    pts = [np.array([[0.0]]), np.array([[0.4]]), np.array([[0.9]])]
    ms = [EmpiricalMeasure.from_points(p) for p in pts]
    d01 = levy_prokhorov(ms[0], ms[1], grid=400)
    d10 = levy_prokhorov(ms[1], ms[0], grid=400)
    d12 = levy_prokhorov(ms[1], ms[2], grid=400)
    d02 = levy_prokhorov(ms[0], ms[2], grid=400)
    assert d01 == d10
    assert d02 <= d01 + d12 + 1.0 / 200


def test_levy_prokhorov_dimension_guard():
    a = EmpiricalMeasure.from_points(np.zeros((3, 1)))
    b = EmpiricalMeasure.from_points(np.zeros((3, 2)))
    with pytest.raises(DimensionMismatch):
        levy_prokhorov(a, b)
    with pytest.raises(DomainError):
        c = EmpiricalMeasure.from_points(np.zeros((3, 4)))
        levy_prokhorov(c, c)


def test_compare_ball_vs_product_shape_and_determinism():
    out1 = compare_ball_vs_product(SeededRng(15), 1, 1.0, [20, 40], 1000, grid=64)
    out2 = compare_ball_vs_product(SeededRng(15), 1, 1.0, [20, 40], 1000, grid=64)
    assert len(out1) == 2
    assert out1 == out2
    with pytest.raises(DomainError):
        compare_ball_vs_product(SeededRng(15), 1, 1.0, [40, 20], 1000)


def test_characteristic_function_gaussian_branch():
    law = ProjectedLaw(a=ColumnList.empty(2), noise_variance=0.7,
                       product_law=PGaussianParams(1.0))
    t = np.array([0.3, -1.2])
    val = characteristic_function(law, t)
    assert abs(val - math.exp(-0.5 * 0.7 * float(t @ t))) < 1e-14
    assert val.imag == 0.0


def test_characteristic_function_degenerate_uniform():
    law = ProjectedLaw(a=columns(1, [[1.0]]), noise_variance=1.0 / 3.0,
                       product_law=PGaussianParams(math.inf))
    for t in (0.0, 0.5, 2.0):
        want = 1.0 if t == 0 else math.sin(t) / t
        assert abs(characteristic_function(law, [t]).real - want) < 1e-12


def test_characteristic_function_normalized_and_bounded():
    law = ProjectedLaw(a=columns(2, [[0.5, 0.1], [0.2, -0.3]]),
                       noise_variance=2.0, product_law=PGaussianParams(1.0))
    assert characteristic_function(law, [0.0, 0.0]) == 1.0
    gen = np.random.default_rng(16)
    for _ in range(20):
        t = gen.uniform(-4, 4, 2)
        assert abs(characteristic_function(law, t)) <= 1.0 + 1e-12


@pytest.mark.parametrize("law_p", [1.0, 1.5, math.inf])
def test_characteristic_function_matches_empirical(law_p):
    a = columns(2, [[0.5, 0.0], [0.1, 0.6]])
    law = ProjectedLaw(a=a, noise_variance=sigma_p_squared(law_p),
                       product_law=PGaussianParams(law_p))
    n = 2 * 10**4
    cloud = sample_projected_law(SeededRng(17), law, n)
    gen = np.random.default_rng(18)
    for _ in range(20):
        t = gen.uniform(-2, 2, 2)
        exact = characteristic_function(law, t).real
        emp = empirical_cf(cloud, t).real
        assert abs(exact - emp) < 3.0 / math.sqrt(n)


def test_sample_projected_law_signed_permutation_invariance():
    base = np.array([[0.5, 0.2], [0.0, 0.4]])
    law1 = ProjectedLaw(a=columns(2, base), noise_variance=1.0 / 3.0,
                        product_law=PGaussianParams(math.inf))
    law2 = ProjectedLaw(a=columns(2, -base[:, ::-1]), noise_variance=1.0 / 3.0,
                        product_law=PGaussianParams(math.inf))
    n = 2 * 10**4
    c1 = sample_projected_law(SeededRng(19), law1, n)
    c2 = sample_projected_law(SeededRng(20), law2, n)
    gen = np.random.default_rng(21)
    for _ in range(10):
        t = gen.uniform(-2, 2, 2)
        assert abs(empirical_cf(c1, t).real - empirical_cf(c2, t).real) < 3.0 / math.sqrt(n)


def test_rademacher_and_custom_laws():
    law = ProjectedLaw(a=columns(1, [[0.6]]), noise_variance=1.0,
                       product_law=RademacherLaw())
    val = characteristic_function(law, [1.0]).real
    want = math.exp(-0.5 * (1 - 0.36)) * math.cos(0.6)
    assert abs(val - want) < 1e-12

    opaque = CustomLaw(sampler=lambda gen, shape: gen.choice([-1.0, 1.0], size=shape),
                       variance=1.0)
    with pytest.raises(UnsupportedLaw):
        law_char_fn(opaque)
    law2 = ProjectedLaw(a=columns(1, [[0.6]]), noise_variance=1.0, product_law=opaque)
    cloud = sample_projected_law(SeededRng(22), law2, 1000)
    assert cloud.count == 1000
