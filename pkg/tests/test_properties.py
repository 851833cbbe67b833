"""Property-based checks complementing the example-based suites."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from sphadc import metrics, schemes as sc, sphere
from sphadc import tensor as tm

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)
eigval = st.floats(min_value=1e-6, max_value=5e-3, allow_nan=False)
unit_seed = st.integers(min_value=0, max_value=2 ** 31 - 1)


@given(l1=eigval, l2=eigval, l3=eigval)
def test_fa_in_unit_interval(l1, l2, l3):
    fa = tm.fa_from_eigenvalues(l1, l2, l3)
    assert 0.0 <= fa <= 1.0 + 1e-12


@given(l1=eigval, l2=eigval, l3=eigval, scale=st.floats(min_value=1e-3,
                                                        max_value=1e3))
def test_fa_scale_invariant(l1, l2, l3, scale):
    a = tm.fa_from_eigenvalues(l1, l2, l3)
    b = tm.fa_from_eigenvalues(scale * l1, scale * l2, scale * l3)
    assert abs(a - b) < 1e-9


@given(seed=unit_seed)
@settings(max_examples=25, deadline=None)
def test_eigendecompose_reconstructs(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 3))
    dt = tm.DiffusionTensor.from_matrix((a + a.T) / 2)
    eig = tm.eigendecompose(dt)
    rec = eig.eigenvectors @ np.diag(eig.eigenvalues) @ eig.eigenvectors.T
    scale = max(np.abs(dt.as_matrix()).max(), 1e-12)
    assert np.abs(rec - dt.as_matrix()).max() < 1e-10 * scale
    assert eig.eigenvalues[0] >= eig.eigenvalues[1] >= eig.eigenvalues[2]


@given(seed=unit_seed)
@settings(max_examples=15, deadline=None)
def test_sht_roundtrip_random_coeffs(seed):
    rng = np.random.default_rng(seed)
    c = sphere.SHCoeffs(6, rng.standard_normal(36))
    grid = sphere.SphGrid(6)
    back = sphere.sht_forward(sphere.sht_inverse(c, grid))
    assert np.abs(back.coeffs - c.coeffs).max() < 1e-11


@given(seed=unit_seed)
@settings(max_examples=15, deadline=None)
def test_rotation_preserves_power(seed):
    rng = np.random.default_rng(seed)
    c = sphere.SHCoeffs(8, rng.standard_normal(64))
    rot = sphere.random_rotation(rng)
    p0 = sphere.power_spectrum(c)
    p1 = sphere.power_spectrum(sphere.rotate_coeffs(c, rot))
    assert np.abs(p0 - p1).max() < 1e-11


@given(seed=unit_seed)
@settings(max_examples=15, deadline=None)
def test_folded_angle_symmetric_bounded(seed):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, 3))
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    a = sc.folded_angle(u, v)
    assert 0.0 <= a <= np.pi / 2 + 1e-12
    assert abs(a - sc.folded_angle(v, u)) < 1e-12
    assert abs(a - sc.folded_angle(u, -v)) < 1e-12


@given(t=st.floats(min_value=-30, max_value=30, allow_nan=False),
       df=st.integers(min_value=1, max_value=60))
def test_t_cdf_bounds_and_symmetry(t, df):
    c = metrics.student_t_cdf(t, df)
    assert 0.0 <= c <= 1.0
    assert abs(c + metrics.student_t_cdf(-t, df) - 1.0) < 1e-10


@given(seed=unit_seed, n=st.integers(min_value=2, max_value=200))
@settings(max_examples=25, deadline=None)
def test_rmse_binned_counts_total(seed, n):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0, 1, n)
    pred = rng.uniform(0, 1, n)
    out = metrics.rmse_binned(pred, gt)
    assert out.counts.sum() == n
    occupied = out.counts > 0
    assert np.isfinite(out.rmse[occupied]).all()
    assert np.isnan(out.rmse[~occupied]).all()
