"""Gradient scheme construction and analysis.

Directions are axes (g and -g equivalent).  Two optimizers are provided:
electrostatic repulsion over the antipodally duplicated point set
(Jones-style) and design-matrix condition number (Skare-style), both via
projected gradient descent with backtracking line search and random
restarts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .tensor import quadratic_form_rows


class RankDeficient(ValueError):
    """Design matrix has rank below 6."""


class CoincidentDirections(ValueError):
    """Two directions (or antipodes) coincide."""


@dataclass(frozen=True)
class GradientScheme:
    """N unit gradient directions sharing one b-value."""

    dirs: np.ndarray
    b: float
    name: str = ""

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.dirs, dtype=float))
        norms = np.linalg.norm(d, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("directions must be unit vectors")
        object.__setattr__(self, "dirs", d)

    @property
    def n(self) -> int:
        return self.dirs.shape[0]


def design_matrix(scheme: GradientScheme) -> np.ndarray:
    """N x 6 matrix with row_i @ vec(D) = g_i^T D g_i."""
    return quadratic_form_rows(scheme.dirs)


def condition_number(scheme: GradientScheme) -> float:
    """Ratio of extreme singular values of the design matrix."""
    if scheme.n < 6:
        raise ValueError("need at least 6 directions")
    sv = np.linalg.svd(design_matrix(scheme), compute_uv=False)
    if sv[-1] <= sv[0] * 1e-14:
        raise RankDeficient("design matrix rank < 6")
    return float(sv[0] / sv[-1])


def electrostatic_energy(dirs: np.ndarray) -> float:
    """Coulomb energy of the 2N points {+-g_i}: sum over unique pairs of 1/r."""
    d = np.atleast_2d(np.asarray(dirs, dtype=float))
    pts = np.concatenate([d, -d])
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    iu = np.triu_indices(len(pts), k=1)
    r = dist[iu]
    if np.any(r < 1e-9):
        raise CoincidentDirections("two directions coincide")
    return float((1.0 / r).sum())


def _energy_gradient(dirs: np.ndarray) -> np.ndarray:
    """Analytic gradient of electrostatic_energy w.r.t. the N directions."""
    n = dirs.shape[0]
    pts = np.concatenate([dirs, -dirs])
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    np.fill_diagonal(dist, np.inf)
    # force on point a: sum_b (p_a - p_b)/r^3; dE/dp_a = -force
    grad_pts = -(diff / dist[:, :, None] ** 3).sum(axis=1)
    # chain rule through p_{i+N} = -p_i
    return grad_pts[:n] - grad_pts[n:]


def _project_tangent(dirs: np.ndarray, grad: np.ndarray) -> np.ndarray:
    radial = (grad * dirs).sum(axis=1, keepdims=True)
    return grad - radial * dirs


def _normalize_rows(d: np.ndarray) -> np.ndarray:
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _descend(dirs, objective, gradient, iters):
    """Projected gradient descent on the sphere with backtracking.

    Never increases the objective; returns (dirs, value).
    """
    val = objective(dirs)
    step = 0.1
    for _ in range(iters):
        g = _project_tangent(dirs, gradient(dirs))
        gnorm = np.linalg.norm(g)
        if gnorm < 1e-14:
            break
        improved = False
        while step > 1e-14:
            cand = _normalize_rows(dirs - step * g / gnorm)
            try:
                cand_val = objective(cand)
            except (CoincidentDirections, RankDeficient):
                cand_val = np.inf
            if cand_val < val:
                dirs, val = cand, cand_val
                step *= 1.5
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return dirs, val


def _random_dirs(n: int, rng: np.random.Generator) -> np.ndarray:
    d = rng.standard_normal((n, 3))
    return _normalize_rows(d)


def _optimize(n, rng, restarts, iters, objective, gradient, b, name):
    best_dirs, best_val = None, np.inf
    for _ in range(restarts):
        init = _random_dirs(n, rng)
        dirs, val = _descend(init, objective, gradient, iters)
        if val < best_val:
            best_dirs, best_val = dirs, val
    return GradientScheme(best_dirs, b=b, name=name)


def optimize_jones(n: int, rng: np.random.Generator, restarts: int = 50,
                   iters: int = 2000, b: float = 1000.0) -> GradientScheme:
    """Electrostatic-repulsion scheme (Jones-style)."""
    if n < 3:
        raise ValueError("need at least 3 directions")
    return _optimize(n, rng, restarts, iters, electrostatic_energy,
                     _energy_gradient, b, f"jones{n}")


def optimize_skare(n: int, rng: np.random.Generator, restarts: int = 50,
                   iters: int = 2000, b: float = 1000.0,
                   fd_step: float = 1e-6) -> GradientScheme:
    """Condition-number-minimizing scheme (Skare-style).

    The gradient of kappa is estimated by central finite differences.
    """
    if n < 6:
        raise ValueError("need at least 6 directions")

    def objective(dirs):
        return condition_number(GradientScheme(_normalize_rows(dirs), b=b))

    def gradient(dirs):
        g = np.zeros_like(dirs)
        for i in range(dirs.shape[0]):
            for j in range(3):
                dp = dirs.copy()
                dp[i, j] += fd_step
                dm = dirs.copy()
                dm[i, j] -= fd_step
                g[i, j] = (objective(dp) - objective(dm)) / (2 * fd_step)
        return g

    return _optimize(n, rng, restarts, iters, objective, gradient, b,
                     f"skare{n}")


def folded_angle(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Angular distance treating directions as axes: min(ang(u,v), ang(u,-v))."""
    dot = np.clip(np.abs(u @ v.T if u.ndim > 1 else u @ v), 0.0, 1.0)
    return np.arccos(dot)


def match_subset(dense: GradientScheme, target: GradientScheme) -> list[int]:
    """Indices into `dense` minimizing total folded angle to `target`.

    Exact minimum-cost assignment; returns one dense index per target
    direction, in target order.
    """
    if dense.n < target.n:
        raise ValueError("dense scheme smaller than target")
    cost = folded_angle(target.dirs, dense.dirs)  # (target.n, dense.n)
    rows, cols = linear_sum_assignment(cost)
    out = [0] * target.n
    for r, c in zip(rows, cols):
        out[r] = int(c)
    return out


def save_scheme(scheme: GradientScheme, path) -> None:
    """Text format: `gx gy gz b` per line, '#' comments, LF newlines."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# gradient scheme: {scheme.name}\n")
        for d in scheme.dirs:
            fh.write(f"{d[0]:.12g} {d[1]:.12g} {d[2]:.12g} {scheme.b:.12g}\n")


def load_scheme(path, name: str | None = None) -> GradientScheme:
    dirs, bvals = [], []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            x, y, z, b = (float(t) for t in line.split())
            v = np.array([x, y, z])
            dirs.append(v / np.linalg.norm(v))
            bvals.append(b)
    if not dirs:
        raise ValueError(f"no directions in {path}")
    if len(set(bvals)) != 1:
        raise ValueError("multi-shell scheme files are not supported")
    import os
    label = name if name is not None else os.path.splitext(os.path.basename(path))[0]
    return GradientScheme(np.array(dirs), b=bvals[0], name=label)
