import numpy as np
import pytest

from sphadc import schemes as sc
from sphadc import tensor as tm
from sphadc.tensor import (
    Acquisition,
    DiffusionTensor,
    NonOrthogonalTargets,
    SingularDirections,
    ZeroTensor,
)


def random_spd(rng, scale=1e-3):
    a = rng.standard_normal((3, 3))
    q, _ = np.linalg.qr(a)
    lam = rng.uniform(0.1, 2.0, 3) * scale
    return DiffusionTensor.from_matrix(q @ np.diag(lam) @ q.T)


def skare6(seed=11):
    rng = np.random.default_rng(seed)
    return sc.optimize_skare(6, rng, restarts=3, iters=200)


class TestPredictSignal:
    def test_b_zero_gives_one(self):
        dt = DiffusionTensor(1e-3, 2e-3, 3e-3, 1e-4, -2e-4, 5e-5)
        acq = Acquisition(b=0.0, g=np.array([0.0, 0.0, 1.0]))
        assert tm.predict_signal(dt, acq) == 1.0

    def test_isotropic(self):
        dt = DiffusionTensor.isotropic(0.7e-3)
        acq = Acquisition(b=1000.0, g=np.array([1.0, 0.0, 0.0]))
        assert tm.predict_signal(dt, acq) == pytest.approx(np.exp(-0.7), rel=1e-12)

    def test_principal_direction_gives_lambda1(self):
        rng = np.random.default_rng(0)
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        lam = np.array([1.7e-3, 0.2e-3, 0.2e-3])
        dt = DiffusionTensor.from_matrix(q @ np.diag(lam) @ q.T)
        acq = Acquisition(b=1000.0, g=q[:, 0])
        assert tm.predict_signal(dt, acq) == pytest.approx(np.exp(-1.7), rel=1e-10)

    def test_positive(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            dt = random_spd(rng)
            g = rng.standard_normal(3)
            g /= np.linalg.norm(g)
            assert tm.predict_signal(dt, Acquisition(1000.0, g)) > 0


class TestAdc:
    def test_isotropic(self):
        dt = DiffusionTensor.isotropic(0.9e-3)
        g = np.array([0.0, 1.0, 0.0])
        assert tm.adc(dt, g) == pytest.approx(0.9e-3, rel=1e-12)

    def test_antipodal_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            dt = random_spd(rng)
            g = rng.standard_normal(3)
            g /= np.linalg.norm(g)
            assert tm.adc(dt, g) == pytest.approx(tm.adc(dt, -g), rel=1e-14)

    def test_axis_aligned(self):
        dt = DiffusionTensor(3e-3, 2e-3, 1e-3, 0, 0, 0)
        assert tm.adc(dt, np.array([1.0, 0, 0])) == pytest.approx(3e-3)

    def test_matches_log_signal(self):
        rng = np.random.default_rng(3)
        dt = random_spd(rng)
        g = rng.standard_normal(3)
        g /= np.linalg.norm(g)
        s = tm.predict_signal(dt, Acquisition(1000.0, g))
        assert tm.adc(dt, g) == pytest.approx(-np.log(s) / 1000.0, abs=1e-12)


class TestFitExact:
    def test_roundtrip(self):
        rng = np.random.default_rng(4)
        scheme = skare6()
        for _ in range(10):
            dt = random_spd(rng)
            sig = np.array([tm.predict_signal(dt, Acquisition(1000.0, g))
                            for g in scheme.dirs])
            fit = tm.fit_dt_exact(sig, scheme.dirs, 1000.0)
            assert np.allclose(fit.as_vector(), dt.as_vector(),
                               rtol=1e-9, atol=1e-15)

    def test_isotropic_signals(self):
        scheme = skare6()
        d = 0.8e-3
        sig = np.full(6, np.exp(-1000.0 * d))
        fit = tm.fit_dt_exact(sig, scheme.dirs, 1000.0)
        assert np.allclose(fit.as_matrix(), d * np.eye(3), atol=1e-12)

    def test_coplanar_raises(self):
        ang = np.linspace(0, np.pi, 6, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang), np.zeros(6)], axis=1)
        with pytest.raises(SingularDirections):
            tm.fit_dt_exact(np.full(6, 0.5), dirs, 1000.0)

    def test_nonpositive_signal_raises_without_clamp(self):
        scheme = skare6()
        sig = np.full(6, 0.5)
        sig[2] = 0.0
        with pytest.raises(tm.NonPositiveSignal):
            tm.fit_dt_exact(sig, scheme.dirs, 1000.0, clamp=False)


class TestFitLls:
    def test_noise_free_roundtrip_90(self):
        rng = np.random.default_rng(5)
        dirs = rng.standard_normal((90, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        scheme = sc.GradientScheme(dirs, b=1000.0, name="dense90")
        dt = random_spd(rng)
        sig = np.exp(-1000.0 * (tm.quadratic_form_rows(dirs) @ dt.as_vector()))
        fit = tm.fit_dt_lls(sig, scheme)
        assert np.allclose(fit.as_vector(), dt.as_vector(), rtol=1e-9)

    def test_n6_equals_exact(self):
        rng = np.random.default_rng(6)
        scheme = skare6()
        sig = rng.uniform(0.3, 0.9, 6)
        a = tm.fit_dt_lls(sig, scheme)
        b = tm.fit_dt_exact(sig, scheme.dirs, scheme.b)
        assert np.allclose(a.as_vector(), b.as_vector(), rtol=1e-12, atol=1e-18)

    def test_dense_beats_exact_under_noise(self):
        # Monte Carlo: 90-direction LLS FA is more accurate than the
        # 6-direction exact fit at SNR 20 (ordering only).
        rng = np.random.default_rng(7)
        dirs = rng.standard_normal((90, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        dense = sc.GradientScheme(dirs, b=1000.0, name="dense90")
        scheme6 = skare6()
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        lam = np.array([1.4e-3, 0.3e-3, 0.3e-3])
        dt = DiffusionTensor.from_matrix(q @ np.diag(lam) @ q.T)
        fa_true = tm.fractional_anisotropy(tm.eigendecompose(dt))
        sig90 = np.exp(-1000.0 * (tm.quadratic_form_rows(dirs) @ dt.as_vector()))
        sig6 = np.exp(-1000.0 * (tm.quadratic_form_rows(scheme6.dirs)
                                 @ dt.as_vector()))
        err90, err6 = [], []
        for _ in range(300):
            n90 = np.sqrt((sig90 + rng.normal(0, .05, 90)) ** 2
                          + rng.normal(0, .05, 90) ** 2)
            n6 = np.sqrt((sig6 + rng.normal(0, .05, 6)) ** 2
                         + rng.normal(0, .05, 6) ** 2)
            f90 = tm.fit_dt_lls(n90, dense)
            f6 = tm.fit_dt_exact(n6, scheme6.dirs, 1000.0)
            err90.append(abs(tm.fractional_anisotropy(tm.eigendecompose(f90))
                             - fa_true))
            err6.append(abs(tm.fractional_anisotropy(tm.eigendecompose(f6))
                            - fa_true))
        assert np.mean(err90) < np.mean(err6)


def char_poly_roots_bisect(mat):
    """Independent oracle: eigenvalues as roots of det(A - x I) by bisection."""
    def det(x):
        return np.linalg.det(mat - x * np.eye(3))

    bound = np.abs(mat).sum() + 1.0
    xs = np.linspace(-bound, bound, 20001)
    vals = np.array([det(x) for x in xs])
    roots = []
    for i in range(len(xs) - 1):
        if vals[i] == 0.0:
            roots.append(xs[i])
        elif vals[i] * vals[i + 1] < 0:
            lo, hi = xs[i], xs[i + 1]
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if det(lo) * det(mid) <= 0:
                    hi = mid
                else:
                    lo = mid
            roots.append(0.5 * (lo + hi))
    return sorted(roots, reverse=True)


class TestEigendecompose:
    def test_diagonal(self):
        dt = DiffusionTensor(3e-3, 1e-3, 2e-3, 0, 0, 0)
        eig = tm.eigendecompose(dt)
        assert np.allclose(eig.eigenvalues, [3e-3, 2e-3, 1e-3])
        assert np.allclose(np.abs(eig.eigenvectors),
                           np.abs(np.eye(3)[:, [0, 2, 1]]), atol=1e-12)

    def test_degenerate(self):
        dt = DiffusionTensor.isotropic(1.1e-3)
        eig = tm.eigendecompose(dt)
        assert np.allclose(eig.eigenvalues, 1.1e-3)
        assert np.allclose(eig.eigenvectors.T @ eig.eigenvectors, np.eye(3),
                           atol=1e-10)

    def test_invariants_random(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            dt = DiffusionTensor.from_matrix(
                (lambda a: (a + a.T) / 2)(rng.standard_normal((3, 3)) * 1e-3))
            eig = tm.eigendecompose(dt)
            v, lam = eig.eigenvectors, eig.eigenvalues
            assert np.abs(v.T @ v - np.eye(3)).max() < 1e-10
            rec = v @ np.diag(lam) @ v.T
            assert (np.linalg.norm(rec - dt.as_matrix())
                    <= 1e-10 * max(np.linalg.norm(dt.as_matrix()), 1e-30))
            assert lam[0] >= lam[1] >= lam[2]

    def test_against_char_poly_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            a = rng.standard_normal((3, 3))
            mat = (a + a.T) / 2
            dt = DiffusionTensor.from_matrix(mat)
            eig = tm.eigendecompose(dt)
            roots = char_poly_roots_bisect(mat)
            assert len(roots) == 3
            assert np.allclose(eig.eigenvalues, roots, atol=1e-10)


class TestFractionalAnisotropy:
    def test_isotropic_zero(self):
        eig = tm.EigenDecomposition(np.array([1e-3] * 3), np.eye(3))
        assert tm.fractional_anisotropy(eig) == 0.0

    def test_stick_limit(self):
        eig = tm.EigenDecomposition(np.array([1.0, 0.0, 0.0]), np.eye(3))
        assert tm.fractional_anisotropy(eig) == pytest.approx(1.0)

    def test_reference_value(self):
        eig = tm.EigenDecomposition(np.array([1.7e-3, 0.2e-3, 0.2e-3]),
                                    np.eye(3))
        assert tm.fractional_anisotropy(eig) == pytest.approx(0.8704, abs=1e-4)

    def test_scale_invariance(self):
        rng = np.random.default_rng(10)
        lam = rng.uniform(0.1, 2.0, 3)
        base = tm.fa_from_eigenvalues(*lam)
        for c in (0.1, 1.0, 10.0):
            assert tm.fa_from_eigenvalues(*(c * lam)) == pytest.approx(
                base, abs=1e-12)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            dt = random_spd(rng)
            q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
            rot = DiffusionTensor.from_matrix(q @ dt.as_matrix() @ q.T)
            fa_a = tm.fractional_anisotropy(tm.eigendecompose(dt))
            fa_b = tm.fractional_anisotropy(tm.eigendecompose(rot))
            assert fa_a == pytest.approx(fa_b, abs=1e-10)

    def test_zero_tensor_raises(self):
        eig = tm.EigenDecomposition(np.zeros(3), np.eye(3))
        with pytest.raises(ZeroTensor):
            tm.fractional_anisotropy(eig)


class TestReorient:
    def test_isotropic_unchanged(self):
        dt = DiffusionTensor.isotropic(0.7e-3)
        out = tm.reorient_dt(dt, np.array([0, 1.0, 0]), np.array([0, 0, 1.0]))
        assert np.allclose(out.as_matrix(), dt.as_matrix(), atol=1e-15)

    def test_fixed_point(self):
        dt = DiffusionTensor(0.2e-3, 1.7e-3, 0.3e-3, 0, 0, 0)
        out = tm.reorient_dt(dt, np.array([0, 1.0, 0]), np.array([0, 0, 1.0]))
        assert np.allclose(out.as_matrix(), dt.as_matrix(), atol=1e-13)

    def test_random_targets(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            dt = random_spd(rng)
            out = tm.reorient_dt(dt, np.array([0, 1.0, 0]),
                                 np.array([0, 0, 1.0]))
            ein = tm.eigendecompose(dt)
            eout = tm.eigendecompose(out)
            assert np.allclose(ein.eigenvalues, eout.eigenvalues, atol=1e-13)
            fa_in = tm.fractional_anisotropy(ein)
            fa_out = tm.fractional_anisotropy(eout)
            assert fa_in == pytest.approx(fa_out, abs=1e-10)
            if ein.eigenvalues[0] - ein.eigenvalues[1] > 1e-5:
                assert abs(eout.eigenvectors[:, 0] @ np.array([0, 1.0, 0])) \
                    == pytest.approx(1.0, abs=1e-8)

    def test_nonorthogonal_raises(self):
        dt = DiffusionTensor.isotropic(1e-3)
        with pytest.raises(NonOrthogonalTargets):
            tm.reorient_dt(dt, np.array([0, 1.0, 0]),
                           np.array([0, 1.0, 1.0]) / np.sqrt(2))
