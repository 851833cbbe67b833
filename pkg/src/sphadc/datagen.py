"""Synthetic diffusion phantom generation.

Voxels are axially symmetric diffusion tensors with controlled FA
(uniform on [0, fa_max]) and mean diffusivity, oriented uniformly over
the sphere or restricted to the anterior-posterior axis (+y, with the
secondary eigenvector on +z).  Noisy 6-direction signals are produced
per gradient scheme with Rician noise at sigma = 1/SNR.

Dataset file: line 1 is a single-line JSON header; each following line
is one voxel: subject_id, the 6 tensor components, fa_gt, then 6 signals
per scheme in header order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tm
from .schemes import GradientScheme
from .sphere import quaternion_to_matrix
from .tensor import DiffusionTensor, quadratic_form_rows

AP_AXIS = np.array([0.0, 1.0, 0.0])  # anterior-posterior (RAS +y)
SI_AXIS = np.array([0.0, 0.0, 1.0])  # superior-inferior (RAS +z)


class SchemeArityError(ValueError):
    """Signal records require exactly 6 directions per scheme."""


@dataclass(frozen=True)
class PhantomConfig:
    n_voxels: int = 100_000
    n_subjects: int = 1
    snr: float = 20.0
    md_mean: float = 0.7e-3
    md_sd: float = 0.1e-3
    fa_max: float = 0.95
    orientation_mode: str = "uniform"  # "uniform" | "ap_restricted"
    seed: int = 0

    def __post_init__(self):
        if self.snr <= 0 or self.md_mean <= 0:
            raise ValueError("snr and md_mean must be positive")
        if self.orientation_mode not in ("uniform", "ap_restricted"):
            raise ValueError("unknown orientation mode")


@dataclass(frozen=True)
class VoxelRecord:
    dt_gt: DiffusionTensor
    fa_gt: float
    signals: dict  # scheme name -> array of 6 noisy normalized signals
    subject_id: int


def _axial_ratio_for_fa(fa):
    """lambda_perp / lambda_parallel giving the target FA, by bisection.

    For eigenvalues (1, r, r): FA(r) = (1 - r) / sqrt(1 + 2 r^2),
    monotone decreasing on [0, 1].  Solved to 1e-12.
    """
    fa = np.asarray(fa, dtype=float)
    lo = np.zeros_like(fa)
    hi = np.ones_like(fa)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        val = (1.0 - mid) / np.sqrt(1.0 + 2.0 * mid * mid)
        too_high = val > fa
        lo = np.where(too_high, mid, lo)
        hi = np.where(too_high, hi, mid)
    return 0.5 * (lo + hi)


def _sample_tensor_batch(rng: np.random.Generator, cfg: PhantomConfig, n: int):
    """Tensors, per-voxel FA and principal axes; one rng stream, batch order."""
    fa = rng.uniform(0.0, cfg.fa_max, n)
    md = np.abs(rng.normal(cfg.md_mean, cfg.md_sd, n))
    md = np.maximum(md, 1e-5)
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    ratio = _axial_ratio_for_fa(fa)
    # (l_par + 2 l_perp)/3 = md with l_perp = ratio * l_par
    l_par = 3.0 * md / (1.0 + 2.0 * ratio)
    l_perp = ratio * l_par
    tensors = np.empty((n, 6))
    axes = np.empty((n, 3))
    for i in range(n):
        r = quaternion_to_matrix(q[i])
        if cfg.orientation_mode == "ap_restricted":
            r = np.stack([AP_AXIS, SI_AXIS, np.cross(AP_AXIS, SI_AXIS)], axis=1)
        m = r @ np.diag([l_par[i], l_perp[i], l_perp[i]]) @ r.T
        tensors[i] = DiffusionTensor.from_matrix(m).as_vector()
        axes[i] = r[:, 0]
    fa_exact = tm.fa_from_eigenvalues(l_par, l_perp, l_perp)
    return tensors, fa_exact, axes


def sample_ground_truth_dt(rng: np.random.Generator,
                           cfg: PhantomConfig) -> DiffusionTensor:
    """One ground-truth tensor drawn from the phantom distribution."""
    tensors, _, _ = _sample_tensor_batch(rng, cfg, 1)
    return DiffusionTensor.from_vector(tensors[0])


def add_rician_noise(signal, sigma: float, rng: np.random.Generator):
    """Magnitude-MRI noise: sqrt((s + n1)^2 + n2^2), n ~ N(0, sigma^2)."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    s = np.asarray(signal, dtype=float)
    if sigma == 0.0:
        return float(s) if s.ndim == 0 else s.copy()
    n1 = rng.normal(0.0, sigma, s.shape)
    n2 = rng.normal(0.0, sigma, s.shape)
    out = np.sqrt((s + n1) ** 2 + n2 ** 2)
    return float(out) if s.ndim == 0 else out


def _voxel_noise_rng(seed: int, subject: int, voxel: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, subject, voxel)))


def _noisy_signals(dt_vec, scheme: GradientScheme, sigma, noise_rng):
    clean = np.exp(-scheme.b * (quadratic_form_rows(scheme.dirs) @ dt_vec))
    return add_rician_noise(clean, sigma, noise_rng)


def restrict_orientation(record: VoxelRecord, cfg: PhantomConfig,
                         schemes: list[GradientScheme],
                         noise_rng: np.random.Generator) -> VoxelRecord:
    """Reorient the tensor onto the AP/SI frame and regenerate the signals."""
    dt = tm.reorient_dt(record.dt_gt, AP_AXIS, SI_AXIS)
    sigma = 1.0 / cfg.snr
    signals = {s.name: _noisy_signals(dt.as_vector(), s, sigma, noise_rng)
               for s in schemes}
    return VoxelRecord(dt_gt=dt, fa_gt=record.fa_gt, signals=signals,
                       subject_id=record.subject_id)


@dataclass
class Dataset:
    """In-memory dataset mirroring the on-disk format."""

    header: dict
    subject_ids: np.ndarray   # (n,)
    tensors: np.ndarray       # (n, 6)
    fa_gt: np.ndarray         # (n,)
    signals: dict = field(default_factory=dict)  # name -> (n, 6)

    @property
    def n(self) -> int:
        return self.fa_gt.size

    def scheme(self, name: str) -> GradientScheme:
        for s in self.header["schemes"]:
            if s["name"] == name:
                return GradientScheme(np.array(s["dirs"]), b=s["b"], name=name)
        raise KeyError(f"scheme {name!r} not in dataset")

    def scheme_names(self) -> list[str]:
        return [s["name"] for s in self.header["schemes"]]

    def subject_mask(self, subject: int) -> np.ndarray:
        return self.subject_ids == subject

    def principal_axes(self) -> np.ndarray:
        """Principal eigenvector per voxel (batch eigensolver)."""
        mats = np.zeros((self.n, 3, 3))
        t = self.tensors
        mats[:, 0, 0], mats[:, 1, 1], mats[:, 2, 2] = t[:, 0], t[:, 1], t[:, 2]
        mats[:, 0, 1] = mats[:, 1, 0] = t[:, 3]
        mats[:, 0, 2] = mats[:, 2, 0] = t[:, 4]
        mats[:, 1, 2] = mats[:, 2, 1] = t[:, 5]
        _, vecs = np.linalg.eigh(mats)
        return vecs[:, :, 2]


def build_dataset(cfg: PhantomConfig, schemes: list[GradientScheme]) -> Dataset:
    """Generate n_subjects x n_voxels records with per-subject seeding.

    Subject j draws tensors from seed cfg.seed + j; each voxel owns a
    noise stream keyed by (seed, subject, voxel), consumed in scheme
    header order, so every scheme's signals share one tensor and one
    noise seed sequence.
    """
    for s in schemes:
        if s.n != 6:
            raise SchemeArityError(f"scheme {s.name!r} has {s.n} directions, need 6")
    header = {
        "version": 1,
        "schemes": [{"name": s.name, "b": s.b,
                     "dirs": [[float(x) for x in d] for d in s.dirs]}
                    for s in schemes],
        "n_subjects": cfg.n_subjects,
        "n_voxels": cfg.n_voxels,
        "snr": cfg.snr,
        "seed": cfg.seed,
        "orientation_mode": cfg.orientation_mode,
    }
    sigma = 1.0 / cfg.snr
    total = cfg.n_subjects * cfg.n_voxels
    subject_ids = np.repeat(np.arange(cfg.n_subjects), cfg.n_voxels)
    tensors = np.empty((total, 6))
    fa = np.empty(total)
    signals = {s.name: np.empty((total, 6)) for s in schemes}
    row = 0
    for j in range(cfg.n_subjects):
        rng = np.random.default_rng(cfg.seed + j)
        tens, fa_j, _ = _sample_tensor_batch(rng, cfg, cfg.n_voxels)
        tensors[row:row + cfg.n_voxels] = tens
        fa[row:row + cfg.n_voxels] = fa_j
        for v in range(cfg.n_voxels):
            noise_rng = _voxel_noise_rng(cfg.seed, j, v)
            for s in schemes:
                signals[s.name][row + v] = _noisy_signals(
                    tens[v], s, sigma, noise_rng)
        row += cfg.n_voxels
    return Dataset(header=header, subject_ids=subject_ids, tensors=tensors,
                   fa_gt=fa, signals=signals)


def record(ds: Dataset, i: int) -> VoxelRecord:
    return VoxelRecord(
        dt_gt=DiffusionTensor.from_vector(ds.tensors[i]),
        fa_gt=float(ds.fa_gt[i]),
        signals={name: ds.signals[name][i] for name in ds.scheme_names()},
        subject_id=int(ds.subject_ids[i]),
    )


def _fmt(x: float) -> str:
    return f"{x:.12e}"


def save_dataset(ds: Dataset, path) -> None:
    names = ds.scheme_names()
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(ds.header, separators=(",", ":"),
                            sort_keys=True) + "\n")
        for i in range(ds.n):
            parts = [str(int(ds.subject_ids[i]))]
            parts += [_fmt(x) for x in ds.tensors[i]]
            parts.append(_fmt(ds.fa_gt[i]))
            for name in names:
                parts += [_fmt(x) for x in ds.signals[name][i]]
            fh.write(",".join(parts) + "\n")


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        header = json.loads(fh.readline())
        names = [s["name"] for s in header["schemes"]]
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    if rows.size == 0:
        rows = np.zeros((0, 8 + 6 * len(names)))
    ds = Dataset(
        header=header,
        subject_ids=rows[:, 0].astype(int),
        tensors=rows[:, 1:7],
        fa_gt=rows[:, 7],
        signals={name: rows[:, 8 + 6 * k:14 + 6 * k]
                 for k, name in enumerate(names)},
    )
    return ds
