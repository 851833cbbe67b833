"""Band-limited real functions on the sphere.

Equiangular 2L x 2L sampling with interpolatory quadrature weights that
are exact for spherical polynomials of degree < 2L, a direct real
spherical-harmonic transform, spectral rotation and power spectra.

Real basis convention: orthonormal, no Condon-Shortley phase,
m > 0 are cosine terms, m < 0 sine terms.  Flat index (l, m) -> l*l + l + m.
Rotations are active (rotated signal f'(x) = f(R^-1 x)), zyz Euler angles.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_legendre, gammaln

from .tensor import DiffusionTensor, quadratic_form_rows


class BandlimitMismatch(ValueError):
    """Coefficient bandlimit exceeds the grid bandlimit."""


def flat_index(l: int, m: int) -> int:
    return l * l + l + m


def _legendre_norm(l: int, m: int) -> float:
    """Normalization of the orthonormal real SH for |m| = m."""
    return np.sqrt((2 * l + 1) / (4 * np.pi)
                   * np.exp(gammaln(l - m + 1) - gammaln(l + m + 1)))


def _assoc_legendre(lmax: int, x: np.ndarray) -> np.ndarray:
    """P_l^m(x) without Condon-Shortley phase, shape (lmax+1, lmax+1, n)."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    p = np.zeros((lmax + 1, lmax + 1) + x.shape)
    p[0, 0] = 1.0
    for m in range(1, lmax + 1):
        p[m, m] = (2 * m - 1) * s * p[m - 1, m - 1]
    for m in range(lmax + 1):
        if m + 1 <= lmax:
            p[m + 1, m] = (2 * m + 1) * x * p[m, m]
        for l in range(m + 2, lmax + 1):
            p[l, m] = ((2 * l - 1) * x * p[l - 1, m]
                       - (l + m - 1) * p[l - 2, m]) / (l - m)
    return p


def real_sh_basis(lmax_excl: int, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Matrix of real SH values, shape (npoints, lmax_excl**2)."""
    theta = np.asarray(theta, dtype=float).ravel()
    phi = np.asarray(phi, dtype=float).ravel()
    lmax = lmax_excl - 1
    p = _assoc_legendre(lmax, np.cos(theta))
    out = np.zeros((theta.size, lmax_excl * lmax_excl))
    for l in range(lmax_excl):
        out[:, flat_index(l, 0)] = _legendre_norm(l, 0) * p[l, 0]
        for m in range(1, l + 1):
            base = np.sqrt(2.0) * _legendre_norm(l, m) * p[l, m]
            out[:, flat_index(l, m)] = base * np.cos(m * phi)
            out[:, flat_index(l, -m)] = base * np.sin(m * phi)
    return out


def _colatitude_weights(thetas: np.ndarray) -> np.ndarray:
    """Interpolatory weights in cos(theta): exact for P_0..P_{n-1}."""
    n = thetas.size
    x = np.cos(thetas)
    v = np.stack([eval_legendre(k, x) for k in range(n)])
    rhs = np.zeros(n)
    rhs[0] = 2.0
    return np.linalg.solve(v, rhs)


@dataclass(frozen=True)
class SphGrid:
    """Equiangular 2L x 2L grid, open at the poles."""

    bandlimit: int
    thetas: np.ndarray = field(init=False)
    phis: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.bandlimit < 2:
            raise ValueError("bandlimit must be >= 2")
        n = 2 * self.bandlimit
        thetas = np.pi * (2 * np.arange(n) + 1) / (2 * n)
        phis = 2 * np.pi * np.arange(n) / n
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "phis", phis)
        object.__setattr__(self, "weights", _colatitude_weights(thetas))

    @property
    def n(self) -> int:
        return 2 * self.bandlimit

    def directions(self) -> np.ndarray:
        """Unit vectors for every grid point, shape (n*n, 3); theta-major."""
        t, p = np.meshgrid(self.thetas, self.phis, indexing="ij")
        st = np.sin(t)
        return np.stack([st * np.cos(p), st * np.sin(p), np.cos(t)],
                        axis=-1).reshape(-1, 3)

    def point_weights(self) -> np.ndarray:
        """Full quadrature weights (solid angle), shape (n*n,); theta-major."""
        return np.repeat(self.weights, self.n) * (2 * np.pi / self.n)


@dataclass(frozen=True)
class SphSignal:
    """Real samples on a SphGrid; values[i, j] = f(theta_i, phi_j)."""

    grid: SphGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n, self.grid.n):
            raise ValueError("values must be shaped (2L, 2L)")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class SHCoeffs:
    """Real SH coefficients a_{lm}, 0 <= l < L, flat layout l*l + l + m."""

    bandlimit: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.bandlimit ** 2,):
            raise ValueError("coefficient vector has wrong length")
        object.__setattr__(self, "coeffs", c)

    def degree_slice(self, l: int) -> np.ndarray:
        return self.coeffs[l * l:(l + 1) * (l + 1)]


@dataclass(frozen=True)
class Rotation:
    """Proper rotation, stored as its 3x3 matrix (active convention)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if np.linalg.norm(m.T @ m - np.eye(3)) > 1e-12 * 3 or np.linalg.det(m) < 0:
            raise ValueError("matrix is not a proper rotation")
        object.__setattr__(self, "matrix", m)

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(np.eye(3))

    @staticmethod
    def from_euler_zyz(alpha: float, beta: float, gamma: float) -> "Rotation":
        def rz(a):
            c, s = np.cos(a), np.sin(a)
            return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

        def ry(a):
            c, s = np.cos(a), np.sin(a)
            return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])

        return Rotation(rz(alpha) @ ry(beta) @ rz(gamma))

    def compose(self, other: "Rotation") -> "Rotation":
        """Rotation applying `other` first, then self."""
        return Rotation(self.matrix @ other.matrix)


class TransformPlan:
    """Precomputed synthesis/analysis matrices for one grid (read-only)."""

    def __init__(self, grid: SphGrid):
        self.grid = grid
        l2 = grid.bandlimit ** 2
        t, p = np.meshgrid(grid.thetas, grid.phis, indexing="ij")
        self.synthesis = real_sh_basis(grid.bandlimit, t, p)  # (npix, L^2)
        self.analysis = self.synthesis.T * grid.point_weights()  # (L^2, npix)
        self._l2 = l2


_PLANS: dict[int, TransformPlan] = {}


def get_plan(grid: SphGrid) -> TransformPlan:
    plan = _PLANS.get(grid.bandlimit)
    if plan is None:
        plan = TransformPlan(grid)
        _PLANS[grid.bandlimit] = plan
    return plan


def sht_forward(signal: SphSignal) -> SHCoeffs:
    """Analysis: exact for signals band-limited below the grid bandlimit."""
    plan = get_plan(signal.grid)
    return SHCoeffs(signal.grid.bandlimit, plan.analysis @ signal.values.ravel())


def sht_inverse(coeffs: SHCoeffs, grid: SphGrid) -> SphSignal:
    """Pointwise synthesis sum a_{lm} Y_{lm} on the grid."""
    if coeffs.bandlimit > grid.bandlimit:
        raise BandlimitMismatch("coefficients exceed the grid bandlimit")
    plan = get_plan(grid)
    c = np.zeros(grid.bandlimit ** 2)
    c[:coeffs.coeffs.size] = coeffs.coeffs
    return SphSignal(grid, (plan.synthesis @ c).reshape(grid.n, grid.n))


def _block_p(i, l, a, b, r, prev):
    """Helper of the real-SH rotation recursion."""
    if b == l:
        return (r[i + 1][2] * prev[a + l - 1, 2 * l - 2]
                - r[i + 1][0] * prev[a + l - 1, 0])
    if b == -l:
        return (r[i + 1][2] * prev[a + l - 1, 0]
                + r[i + 1][0] * prev[a + l - 1, 2 * l - 2])
    return r[i + 1][1] * prev[a + l - 1, b + l - 1]


def _rotation_block(l: int, r, prev: np.ndarray) -> np.ndarray:
    """Real SH rotation block of degree l from the degree l-1 block.

    Recursive construction of real spherical-harmonic rotation matrices
    from the 3x3 rotation (Ivanic-Ruedenberg recursion, corrected form).
    """
    size = 2 * l + 1
    out = np.zeros((size, size))
    for m in range(-l, l + 1):
        for n in range(-l, l + 1):
            if abs(n) < l:
                denom = (l + n) * (l - n)
            else:
                denom = 2 * l * (2 * l - 1)
            u = np.sqrt((l + m) * (l - m) / denom)
            v = 0.5 * np.sqrt((1.0 + (m == 0)) * (l + abs(m) - 1) * (l + abs(m))
                              / denom) * (1.0 - 2.0 * (m == 0))
            w = -0.5 * np.sqrt((l - abs(m) - 1) * (l - abs(m)) / denom) \
                * (1.0 - (m == 0))
            val = 0.0
            if u != 0.0:
                val += u * _block_p(0, l, m, n, r, prev)
            if v != 0.0:
                if m == 0:
                    val += v * (_block_p(1, l, 1, n, r, prev)
                                + _block_p(-1, l, -1, n, r, prev))
                elif m > 0:
                    term = _block_p(1, l, m - 1, n, r, prev) \
                        * np.sqrt(1.0 + (m == 1))
                    term -= _block_p(-1, l, -m + 1, n, r, prev) * (1.0 - (m == 1))
                    val += v * term
                else:
                    term = _block_p(1, l, m + 1, n, r, prev) * (1.0 - (m == -1))
                    term += _block_p(-1, l, -m - 1, n, r, prev) \
                        * np.sqrt(1.0 + (m == -1))
                    val += v * term
            if w != 0.0:
                if m > 0:
                    val += w * (_block_p(1, l, m + 1, n, r, prev)
                                + _block_p(-1, l, -m - 1, n, r, prev))
                else:
                    val += w * (_block_p(1, l, m - 1, n, r, prev)
                                - _block_p(-1, l, -m + 1, n, r, prev))
            out[m + l, n + l] = val
    return out


def rotation_blocks(rot: Rotation, lmax_excl: int) -> list[np.ndarray]:
    """Per-degree real rotation matrices M^l for degrees 0..lmax_excl-1."""
    m = rot.matrix
    # ell=1 block in basis order (-1, 0, 1) ~ (y, z, x)
    perm = (1, 2, 0)
    r1 = np.array([[m[perm[i]][perm[j]] for j in range(3)] for i in range(3)])
    blocks = [np.ones((1, 1)), r1]
    r = [list(r1[i]) for i in range(3)]  # r[i+1][j+1] indexing helper
    for l in range(2, lmax_excl):
        blocks.append(_rotation_block(l, r, blocks[l - 1]))
    return blocks[:max(lmax_excl, 1)]


def rotate_coeffs(coeffs: SHCoeffs, rot: Rotation) -> SHCoeffs:
    """Apply the block-diagonal rotation action per degree."""
    blocks = rotation_blocks(rot, coeffs.bandlimit)
    out = np.empty_like(coeffs.coeffs)
    for l in range(coeffs.bandlimit):
        sl = slice(l * l, (l + 1) * (l + 1))
        out[sl] = blocks[l] @ coeffs.coeffs[sl]
    return SHCoeffs(coeffs.bandlimit, out)


def power_spectrum(coeffs: SHCoeffs) -> np.ndarray:
    """P_l = sum_m a_{lm}^2, length L; rotation invariant."""
    return np.array([float(coeffs.degree_slice(l) @ coeffs.degree_slice(l))
                     for l in range(coeffs.bandlimit)])


def sample_adc(dt: DiffusionTensor, grid: SphGrid) -> SphSignal:
    """ADC profile g^T D g sampled over the grid (degree <= 2 exactly)."""
    vals = quadratic_form_rows(grid.directions()) @ dt.as_vector()
    return SphSignal(grid, vals.reshape(grid.n, grid.n))


def random_rotation(rng: np.random.Generator) -> Rotation:
    """Haar-uniform rotation from a normalized 4D Gaussian quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    return Rotation(quaternion_to_matrix(q))


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
