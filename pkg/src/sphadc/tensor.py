"""Diffusion tensor forward model, fitting, eigenanalysis and FA.

The tensor is stored as its 6 independent components (dxx, dyy, dzz,
dxy, dxz, dyz) of the symmetric 3x3 matrix D.  Signals follow
s = s0 * exp(-b * g^T D g).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SingularDirections(ValueError):
    """Direction set is rank deficient (condition number > 1e12)."""


class NonPositiveSignal(ValueError):
    """A signal was <= 0 and clamping was disabled."""


class ZeroTensor(ValueError):
    """All eigenvalues are zero; FA is undefined."""


class NonOrthogonalTargets(ValueError):
    """Reorientation target axes are not orthogonal."""


SIGNAL_CLAMP = 1e-6
COND_LIMIT = 1e12


@dataclass(frozen=True)
class DiffusionTensor:
    """Symmetric 3x3 diffusion tensor, components in mm^2/s."""

    dxx: float
    dyy: float
    dzz: float
    dxy: float
    dxz: float
    dyz: float

    def as_matrix(self) -> np.ndarray:
        return np.array([
            [self.dxx, self.dxy, self.dxz],
            [self.dxy, self.dyy, self.dyz],
            [self.dxz, self.dyz, self.dzz],
        ])

    def as_vector(self) -> np.ndarray:
        """Component order (dxx, dyy, dzz, dxy, dxz, dyz), matching design rows."""
        return np.array([self.dxx, self.dyy, self.dzz,
                         self.dxy, self.dxz, self.dyz])

    @staticmethod
    def from_matrix(m: np.ndarray) -> "DiffusionTensor":
        m = np.asarray(m, dtype=float)
        return DiffusionTensor(m[0, 0], m[1, 1], m[2, 2],
                               m[0, 1], m[0, 2], m[1, 2])

    @staticmethod
    def from_vector(v: np.ndarray) -> "DiffusionTensor":
        return DiffusionTensor(*(float(x) for x in v))

    @staticmethod
    def isotropic(d: float) -> "DiffusionTensor":
        return DiffusionTensor(d, d, d, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues sorted descending; eigenvectors[:, i] pairs with eigenvalues[i]."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class Acquisition:
    """One diffusion-weighted measurement setting."""

    b: float
    g: np.ndarray
    s0: float = 1.0

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        object.__setattr__(self, "g", g)
        if abs(np.linalg.norm(g) - 1.0) > 1e-12:
            raise ValueError("gradient direction must be a unit vector")
        if self.b < 0:
            raise ValueError("b-value must be nonnegative")


def quadratic_form_rows(dirs: np.ndarray) -> np.ndarray:
    """Rows [gx^2, gy^2, gz^2, 2 gx gy, 2 gx gz, 2 gy gz] for each direction.

    row @ dt.as_vector() == g^T D g.
    """
    g = np.atleast_2d(np.asarray(dirs, dtype=float))
    gx, gy, gz = g[:, 0], g[:, 1], g[:, 2]
    return np.stack([gx * gx, gy * gy, gz * gz,
                     2 * gx * gy, 2 * gx * gz, 2 * gy * gz], axis=1)


def predict_signal(dt: DiffusionTensor, acq: Acquisition) -> float:
    """Noise-free signal s0 * exp(-b g^T D g)."""
    q = float(quadratic_form_rows(acq.g)[0] @ dt.as_vector())
    return acq.s0 * float(np.exp(-acq.b * q))


def adc(dt: DiffusionTensor, g: np.ndarray) -> float:
    """Apparent diffusion coefficient g^T D g along unit direction g."""
    return float(quadratic_form_rows(g)[0] @ dt.as_vector())


def _design(dirs: np.ndarray, name: str = "directions") -> np.ndarray:
    x = quadratic_form_rows(dirs)
    sv = np.linalg.svd(x, compute_uv=False)
    if sv[-1] <= 0 or sv[0] / sv[-1] > COND_LIMIT:
        raise SingularDirections(f"{name} give a rank-deficient design matrix")
    return x


def _log_signals(signals: np.ndarray, clamp: bool):
    s = np.asarray(signals, dtype=float)
    if np.any(s <= 0):
        if not clamp:
            raise NonPositiveSignal("signal <= 0")
    clamped = bool(np.any(s < SIGNAL_CLAMP))
    return np.log(np.maximum(s, SIGNAL_CLAMP)), clamped


def fit_dt_exact(signals, dirs, b: float, clamp: bool = True) -> DiffusionTensor:
    """Invert the determined 6x6 system -ln(s_i)/b = g_i^T D g_i.

    Signals must be s0-normalized.  Signals below the clamp floor are
    clamped (the paper's 1-to-1 mapping tolerates arbitrary noise).
    """
    signals = np.asarray(signals, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    if signals.shape != (6,) or dirs.shape != (6, 3):
        raise ValueError("exact fit needs exactly 6 signals and 6 directions")
    if b <= 0:
        raise ValueError("b must be positive")
    x = _design(dirs)
    y, _ = _log_signals(signals, clamp)
    d = np.linalg.solve(x, -y / b)
    return DiffusionTensor.from_vector(d)


def fit_dt_lls(signals, scheme, s0: float = 1.0, clamp: bool = True) -> DiffusionTensor:
    """Ordinary least squares on ln(s0) - ln(s_i) = b g_i^T D g_i.

    `scheme` is a schemes.GradientScheme (N >= 6 directions, single b).
    Equals fit_dt_exact when N == 6.
    """
    signals = np.asarray(signals, dtype=float)
    if signals.shape[0] != scheme.dirs.shape[0]:
        raise ValueError("signal count does not match scheme size")
    if signals.shape[0] < 6:
        raise ValueError("need at least 6 measurements")
    x = _design(scheme.dirs, scheme.name)
    y, _ = _log_signals(signals, clamp)
    rhs = (np.log(s0) - y) / scheme.b
    d, *_ = np.linalg.lstsq(x, rhs, rcond=None)
    return DiffusionTensor.from_vector(d)


def _jacobi_eigh(a: np.ndarray):
    """Cyclic Jacobi for a symmetric 3x3 matrix.

    Stops when the off-diagonal Frobenius norm drops below 1e-14 * ||A||.
    """
    a = a.copy()
    v = np.eye(3)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(3), v
    for _ in range(64):
        off = np.sqrt(a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2) * np.sqrt(2.0)
        if off < 1e-14 * norm:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            if apq == 0.0:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
            if theta == 0.0:
                t = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            j = np.eye(3)
            j[p, p] = j[q, q] = c
            j[p, q] = s
            j[q, p] = -s
            a = j.T @ a @ j
            v = v @ j
    return np.diag(a).copy(), v


def _canonical_sign(vec: np.ndarray) -> np.ndarray:
    """Flip sign so the largest-magnitude component is positive (first on ties)."""
    k = int(np.argmax(np.abs(vec)))
    return -vec if vec[k] < 0 else vec


def eigendecompose(dt: DiffusionTensor) -> EigenDecomposition:
    """Eigenvalues sorted descending with matched orthonormal eigenvectors.

    Near-degenerate pairs keep a deterministic order: stable sort on the
    eigenvalue, ties broken by the lexicographically larger eigenvector.
    """
    lam, vec = _jacobi_eigh(dt.as_matrix())
    vec = np.stack([_canonical_sign(vec[:, i]) for i in range(3)], axis=1)
    order = sorted(range(3),
                   key=lambda i: (-lam[i], tuple(-vec[:, i])))
    lam = lam[order]
    vec = vec[:, order]
    return EigenDecomposition(eigenvalues=lam, eigenvectors=vec)


def fractional_anisotropy(eig: EigenDecomposition) -> float:
    """FA from eigenvalues, clamped to [0, 1]."""
    lam = np.asarray(eig.eigenvalues, dtype=float)
    return fa_from_eigenvalues(lam[0], lam[1], lam[2])


def fa_from_eigenvalues(l1, l2, l3):
    """Vectorized FA; raises ZeroTensor if the eigenvalue norm is zero."""
    l1 = np.asarray(l1, dtype=float)
    l2 = np.asarray(l2, dtype=float)
    l3 = np.asarray(l3, dtype=float)
    denom = l1 * l1 + l2 * l2 + l3 * l3
    if np.any(denom == 0.0):
        raise ZeroTensor("all eigenvalues zero")
    num = (l1 - l2) ** 2 + (l2 - l3) ** 2 + (l1 - l3) ** 2
    fa = np.sqrt(0.5 * num / denom)
    fa = np.clip(fa, 0.0, 1.0)
    if fa.ndim == 0:
        return float(fa)
    return fa


def reorient_dt(dt: DiffusionTensor, e1_target: np.ndarray,
                e2_target: np.ndarray) -> DiffusionTensor:
    """Rebuild the tensor with its principal frame mapped onto the targets.

    Eigenvalues are preserved; the principal eigenvector becomes
    +-e1_target, the secondary +-e2_target and the third their cross
    product.
    """
    e1 = np.asarray(e1_target, dtype=float)
    e2 = np.asarray(e2_target, dtype=float)
    e1 = e1 / np.linalg.norm(e1)
    e2 = e2 / np.linalg.norm(e2)
    if abs(float(e1 @ e2)) > 1e-10:
        raise NonOrthogonalTargets("target axes must be orthogonal")
    eig = eigendecompose(dt)
    basis = np.stack([e1, e2, np.cross(e1, e2)], axis=1)
    m = basis @ np.diag(eig.eigenvalues) @ basis.T
    return DiffusionTensor.from_matrix(m)
