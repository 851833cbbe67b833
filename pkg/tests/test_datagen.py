import numpy as np
import pytest

from sphadc import datagen as dg
from sphadc import tensor as tm
from sphadc.datagen import PhantomConfig
from sphadc.schemes import GradientScheme


def two_schemes():
    a = GradientScheme(np.array([
        [1, 0, 0], [0, 1, 0], [0, 0, 1],
        [1, 1, 0], [1, 0, 1], [0, 1, 1]], dtype=float)
        / np.array([[1], [1], [1], [np.sqrt(2)], [np.sqrt(2)], [np.sqrt(2)]]),
        b=1000.0, name="axes6")
    rng = np.random.default_rng(99)
    d = rng.standard_normal((6, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    b = GradientScheme(d, b=1000.0, name="rand6")
    return [a, b]


def closed_form_ratio(fa):
    """Quadratic formula oracle for lambda_perp/lambda_par at given FA.

    From fa^2 (1 + 2 r^2) = (1 - r)^2:
    (1 - 2 fa^2) r^2 - 2 r + (1 - fa^2) = 0.
    """
    a = 1.0 - 2.0 * fa * fa
    if abs(a) < 1e-14:
        return (1.0 - fa * fa) / 2.0
    disc = np.sqrt(4.0 - 4.0 * a * (1.0 - fa * fa))
    r = (2.0 - disc) / (2.0 * a)
    return r


class TestAxialRatio:
    def test_against_closed_form(self):
        for fa in (0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95):
            got = float(dg._axial_ratio_for_fa(np.array(fa)))
            assert got == pytest.approx(closed_form_ratio(fa), abs=1e-10)

    def test_roundtrip_fa(self):
        fa = np.linspace(0.0, 0.95, 40)
        r = dg._axial_ratio_for_fa(fa)
        back = (1.0 - r) / np.sqrt(1.0 + 2.0 * r * r)
        assert np.abs(back - fa).max() < 1e-10

    def test_extremes(self):
        assert float(dg._axial_ratio_for_fa(np.array(0.0))) == pytest.approx(
            1.0, abs=1e-10)


class TestSampling:
    def test_fa_md_distribution(self):
        cfg = PhantomConfig(n_voxels=4000, seed=1)
        rng = np.random.default_rng(cfg.seed)
        tensors, fa, axes = dg._sample_tensor_batch(rng, cfg, 4000)
        assert fa.min() >= 0.0 and fa.max() <= cfg.fa_max
        md = tensors[:, :3].mean(axis=1)
        assert md.mean() == pytest.approx(cfg.md_mean, rel=0.02)
        assert md.std() == pytest.approx(cfg.md_sd, rel=0.1)

    def test_fa_matches_tensor(self):
        cfg = PhantomConfig(n_voxels=50, seed=2)
        rng = np.random.default_rng(cfg.seed)
        tensors, fa, _ = dg._sample_tensor_batch(rng, cfg, 50)
        for i in range(50):
            dt = tm.DiffusionTensor.from_vector(tensors[i])
            got = tm.fractional_anisotropy(tm.eigendecompose(dt))
            assert got == pytest.approx(fa[i], abs=1e-9)

    def test_uniform_axes(self):
        cfg = PhantomConfig(n_voxels=5000, seed=3)
        rng = np.random.default_rng(cfg.seed)
        _, _, axes = dg._sample_tensor_batch(rng, cfg, 5000)
        # folded onto a hemisphere the mean outer product is I/3
        outer = np.einsum("ni,nj->ij", axes, axes) / 5000
        assert np.abs(outer - np.eye(3) / 3).max() < 0.02

    def test_ap_restricted_axes(self):
        cfg = PhantomConfig(n_voxels=100, seed=4,
                            orientation_mode="ap_restricted")
        rng = np.random.default_rng(cfg.seed)
        tensors, fa, axes = dg._sample_tensor_batch(rng, cfg, 100)
        assert np.allclose(np.abs(axes @ dg.AP_AXIS), 1.0, atol=1e-12)
        for i in range(0, 100, 17):
            dt = tm.DiffusionTensor.from_vector(tensors[i])
            eig = tm.eigendecompose(dt)
            if fa[i] > 0.05:
                assert abs(eig.eigenvectors[:, 0] @ dg.AP_AXIS) \
                    == pytest.approx(1.0, abs=1e-9)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            PhantomConfig(snr=-1.0)
        with pytest.raises(ValueError):
            PhantomConfig(orientation_mode="sideways")


class TestRicianNoise:
    def test_zero_sigma_identity(self):
        rng = np.random.default_rng(5)
        s = np.array([0.3, 0.9])
        assert np.array_equal(dg.add_rician_noise(s, 0.0, rng), s)

    def test_nonnegative(self):
        rng = np.random.default_rng(6)
        out = dg.add_rician_noise(np.zeros(1000), 0.05, rng)
        assert (out >= 0).all()

    def test_zero_signal_rayleigh_mean(self):
        # Rician with s=0 is Rayleigh: mean sigma * sqrt(pi/2).
        rng = np.random.default_rng(7)
        out = dg.add_rician_noise(np.zeros(200000), 0.05, rng)
        assert out.mean() == pytest.approx(0.05 * np.sqrt(np.pi / 2), rel=0.01)

    def test_high_snr_moments(self):
        # For s >> sigma the distribution is close to N(s, sigma).
        rng = np.random.default_rng(8)
        out = dg.add_rician_noise(np.full(200000, 1.0), 0.05, rng)
        assert out.mean() == pytest.approx(1.0 + 0.05 ** 2 / 2, abs=5e-4)
        assert out.std() == pytest.approx(0.05, rel=0.02)

    def test_negative_sigma(self):
        rng = np.random.default_rng(9)
        with pytest.raises(ValueError):
            dg.add_rician_noise(np.ones(3), -0.1, rng)


class TestBuildDataset:
    def test_shapes_and_header(self):
        schemes = two_schemes()
        cfg = PhantomConfig(n_voxels=20, n_subjects=3, seed=10)
        ds = dg.build_dataset(cfg, schemes)
        assert ds.n == 60
        assert ds.scheme_names() == ["axes6", "rand6"]
        assert set(np.unique(ds.subject_ids)) == {0, 1, 2}
        assert ds.signals["axes6"].shape == (60, 6)

    def test_schemes_share_tensor(self):
        # both schemes' signals must decode to (nearly) the same tensor
        schemes = two_schemes()
        cfg = PhantomConfig(n_voxels=30, seed=11, snr=1e6)
        ds = dg.build_dataset(cfg, schemes)
        for i in range(0, 30, 7):
            fits = []
            for s in schemes:
                dt = tm.fit_dt_exact(ds.signals[s.name][i], s.dirs, s.b)
                fits.append(dt.as_vector())
            assert np.abs(fits[0] - fits[1]).max() < 1e-7

    def test_deterministic(self):
        schemes = two_schemes()
        cfg = PhantomConfig(n_voxels=15, n_subjects=2, seed=12)
        a = dg.build_dataset(cfg, schemes)
        b = dg.build_dataset(cfg, schemes)
        assert np.array_equal(a.tensors, b.tensors)
        assert np.array_equal(a.signals["rand6"], b.signals["rand6"])

    def test_subjects_differ(self):
        schemes = two_schemes()
        cfg = PhantomConfig(n_voxels=15, n_subjects=2, seed=13)
        ds = dg.build_dataset(cfg, schemes)
        assert not np.allclose(ds.tensors[:15], ds.tensors[15:])

    def test_noise_magnitude(self):
        schemes = two_schemes()[:1]
        cfg = PhantomConfig(n_voxels=400, seed=14, snr=20.0)
        ds = dg.build_dataset(cfg, schemes)
        clean = np.exp(-1000.0 * np.einsum(
            "kj,nj->nk", tm.quadratic_form_rows(schemes[0].dirs), ds.tensors))
        resid = ds.signals["axes6"] - clean
        assert np.abs(resid).mean() > 0.01
        assert np.std(resid) == pytest.approx(1 / 20.0, rel=0.15)

    def test_wrong_arity(self):
        d = np.eye(3)
        with pytest.raises(dg.SchemeArityError):
            dg.build_dataset(PhantomConfig(n_voxels=1),
                             [GradientScheme(d, b=1000.0, name="three")])


class TestRestrictOrientation:
    def test_reorients_and_regenerates(self):
        schemes = two_schemes()
        cfg = PhantomConfig(n_voxels=5, seed=15)
        ds = dg.build_dataset(cfg, schemes)
        rec = dg.record(ds, 0)
        out = dg.restrict_orientation(rec, cfg, schemes,
                                      dg._voxel_noise_rng(cfg.seed, 0, 0))
        assert out.fa_gt == rec.fa_gt
        eig = tm.eigendecompose(out.dt_gt)
        if rec.fa_gt > 0.05:
            assert abs(eig.eigenvectors[:, 0] @ dg.AP_AXIS) \
                == pytest.approx(1.0, abs=1e-8)
        ein = tm.eigendecompose(rec.dt_gt)
        assert np.allclose(eig.eigenvalues, ein.eigenvalues, atol=1e-12)
        assert set(out.signals) == {"axes6", "rand6"}


class TestDatasetIo:
    def test_roundtrip(self, tmp_path):
        schemes = two_schemes()
        cfg = PhantomConfig(n_voxels=25, n_subjects=2, seed=16)
        ds = dg.build_dataset(cfg, schemes)
        path = tmp_path / "d.ds"
        dg.save_dataset(ds, path)
        back = dg.load_dataset(path)
        assert back.header == ds.header
        assert np.array_equal(back.subject_ids, ds.subject_ids)
        assert np.abs(back.tensors - ds.tensors).max() < 1e-14
        assert np.abs(back.fa_gt - ds.fa_gt).max() < 1e-13
        for name in ds.scheme_names():
            assert np.abs(back.signals[name] - ds.signals[name]).max() < 1e-13

    def test_header_is_json_line(self, tmp_path):
        import json
        schemes = two_schemes()
        ds = dg.build_dataset(PhantomConfig(n_voxels=2, seed=17), schemes)
        path = tmp_path / "d.ds"
        dg.save_dataset(ds, path)
        with open(path) as fh:
            header = json.loads(fh.readline())
            assert header["n_voxels"] == 2
            n_lines = sum(1 for _ in fh)
        assert n_lines == 2

    def test_scheme_recoverable(self, tmp_path):
        schemes = two_schemes()
        ds = dg.build_dataset(PhantomConfig(n_voxels=2, seed=18), schemes)
        path = tmp_path / "d.ds"
        dg.save_dataset(ds, path)
        back = dg.load_dataset(path)
        s = back.scheme("rand6")
        assert np.abs(s.dirs - schemes[1].dirs).max() < 1e-15
        with pytest.raises(KeyError):
            back.scheme("missing")

    def test_principal_axes(self):
        schemes = two_schemes()
        cfg = PhantomConfig(n_voxels=30, seed=19)
        ds = dg.build_dataset(cfg, schemes)
        axes = ds.principal_axes()
        for i in range(0, 30, 6):
            if ds.fa_gt[i] < 0.1:
                continue
            dt = tm.DiffusionTensor.from_vector(ds.tensors[i])
            e1 = tm.eigendecompose(dt).eigenvectors[:, 0]
            assert abs(axes[i] @ e1) == pytest.approx(1.0, abs=1e-9)
