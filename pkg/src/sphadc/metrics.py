"""Error metrics and statistics for FA estimates.

Binned RMSE over 5 uniform ground-truth FA ranges, paired t-tests with
p-values from a continued-fraction regularized incomplete beta,
orientation tile maps on a level-1 icosphere (80 faces, antipodally
folded), and rotation-equivariance measurement for spherical models.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn, sphere

N_BINS = 5


class LengthMismatch(ValueError):
    """Paired lists have different lengths."""


class ZeroVariance(ValueError):
    """All paired differences are identical; t is undefined."""


class WrongModelKind(ValueError):
    """Operation requires a spherical model."""


@dataclass(frozen=True)
class BinnedRmse:
    edges: np.ndarray    # length N_BINS + 1
    rmse: np.ndarray     # length N_BINS, NaN where count == 0
    counts: np.ndarray   # length N_BINS


def rmse_binned(pred, gt) -> BinnedRmse:
    """Per-bin sqrt(mean((pred - gt)^2)); bins chosen by the gt value."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise LengthMismatch("pred and gt lengths differ")
    edges = np.linspace(0.0, 1.0, N_BINS + 1)
    idx = np.minimum((gt * N_BINS).astype(int), N_BINS - 1)
    rmse = np.full(N_BINS, np.nan)
    counts = np.zeros(N_BINS, dtype=int)
    for b in range(N_BINS):
        mask = idx == b
        counts[b] = int(mask.sum())
        if counts[b]:
            d = pred[mask] - gt[mask]
            rmse[b] = float(np.sqrt(np.mean(d * d)))
    return BinnedRmse(edges=edges, rmse=rmse, counts=counts)


# ---------------------------------------------------------------------------
# Student-t machinery


def _betacf(a: float, b: float, x: float, tol: float = 1e-12) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    return h


def _lgamma(x: float) -> float:
    # Lanczos-free: rely on the math library
    import math
    return math.lgamma(x)


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) to ~1e-12 relative."""
    import math
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(_lgamma(a + b) - _lgamma(a) - _lgamma(b)
                     + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: int) -> float:
    """CDF of Student's t; monotone, CDF(0) = 0.5 exactly."""
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * betainc_reg(df / 2.0, 0.5, x)
    return 1.0 - tail if t > 0 else tail


def student_t_sf2(t: float, df: int) -> float:
    """Two-sided p-value P(|T| >= |t|)."""
    x = df / (df + t * t)
    return betainc_reg(df / 2.0, 0.5, x)


def paired_ttest(a, b):
    """Paired two-sided t-test on a - b; returns (t, p).

    Raises ZeroVariance when all differences are identical; callers that
    want the flagged convention (p = 1 if the common difference is 0,
    else 0) should catch it.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch("paired samples must have equal lengths")
    n = a.size
    if n < 2:
        raise ValueError("need at least 2 pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise ZeroVariance("all paired differences identical")
    t = float(np.mean(d)) / (sd / np.sqrt(n))
    p = student_t_sf2(t, n - 1)
    return t, max(p, 0.0)


def paired_ttest_flagged(a, b):
    """paired_ttest with the degenerate case mapped to (t, p, flag)."""
    try:
        t, p = paired_ttest(a, b)
        return t, p, False
    except ZeroVariance:
        d = float(np.mean(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
        return (0.0, 1.0, True) if d == 0.0 else (np.inf, 0.0, True)


# ---------------------------------------------------------------------------
# icosphere tile map


def _icosahedron():
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return v, f


def icosphere_faces(level: int = 1) -> np.ndarray:
    """Face vertex triples of a subdivided icosahedron, shape (F, 3, 3)."""
    v, f = _icosahedron()
    faces = v[f]
    for _ in range(level):
        out = []
        for a, b, c in faces:
            ab = (a + b) / np.linalg.norm(a + b)
            bc = (b + c) / np.linalg.norm(b + c)
            ca = (c + a) / np.linalg.norm(c + a)
            out += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = np.array(out)
    return faces


def fold_to_hemisphere(dirs: np.ndarray) -> np.ndarray:
    """Antipodal representative with z > 0 (ties broken by y, then x)."""
    d = np.atleast_2d(np.asarray(dirs, dtype=float)).copy()
    flip = (d[:, 2] < 0) \
        | ((d[:, 2] == 0) & (d[:, 1] < 0)) \
        | ((d[:, 2] == 0) & (d[:, 1] == 0) & (d[:, 0] < 0))
    d[flip] *= -1.0
    return d


class TileMap:
    """Per-tile mean absolute FA error over folded principal directions."""

    def __init__(self, values: np.ndarray, counts: np.ndarray,
                 faces: np.ndarray):
        self.values = values
        self.counts = counts
        self.faces = faces

    def centers(self) -> np.ndarray:
        c = self.faces.mean(axis=1)
        return c / np.linalg.norm(c, axis=1, keepdims=True)

    def occupied(self) -> np.ndarray:
        return self.counts > 0


def assign_tiles(dirs: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Tile index for each folded direction; total and deterministic.

    A point lies in the face whose three edge planes all leave it on the
    inner side; numerical ties go to the face with the nearest center.
    """
    d = fold_to_hemisphere(dirs)
    normals = np.cross(faces[:, [1, 2, 0]], faces[:, [0, 1, 2]], axis=2)
    # sign convention: face center is inside its own three half-spaces
    centers = faces.mean(axis=1)
    sign = np.sign(np.einsum("fej,fj->fe", normals, centers))
    normals *= sign[:, :, None]
    s = np.einsum("nj,fej->nfe", d, normals)
    inside = (s >= -1e-12).all(axis=2)
    out = np.argmax(inside, axis=1)
    missing = ~inside.any(axis=1)
    if np.any(missing):
        cn = centers / np.linalg.norm(centers, axis=1, keepdims=True)
        out[missing] = np.argmax(d[missing] @ cn.T, axis=1)
    return out


def sphere_tile_map(pred, gt, principal_dirs, fa_threshold: float = 0.6,
                    level: int = 1) -> TileMap:
    """Mean |pred - gt| per icosphere tile for voxels above the FA threshold."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    dirs = np.atleast_2d(np.asarray(principal_dirs, dtype=float))
    if not (pred.shape == gt.shape and dirs.shape[0] == gt.size):
        raise LengthMismatch("pred, gt and principal_dirs must align")
    faces = icosphere_faces(level)
    mask = gt > fa_threshold
    n_faces = faces.shape[0]
    counts = np.zeros(n_faces, dtype=int)
    sums = np.zeros(n_faces)
    if np.any(mask):
        tiles = assign_tiles(dirs[mask], faces)
        err = np.abs(pred[mask] - gt[mask])
        np.add.at(counts, tiles, 1)
        np.add.at(sums, tiles, err)
    values = np.full(n_faces, np.nan)
    nz = counts > 0
    values[nz] = sums[nz] / counts[nz]
    return TileMap(values=values, counts=counts, faces=faces)


def equivariance_error(model: nn.NetworkModel, inputs, n_rotations: int,
                       seed: int = 0):
    """Max and mean |f(rot(x)) - f(x)| over seeded random rotations.

    `inputs` is a list of SphSignal or an array of scaled coefficient
    vectors on the model grid.  FCN models have no spherical input path.
    """
    if model.spec.kind != "scnn":
        raise WrongModelKind("equivariance_error requires an SCNN")
    ll = model.spec.scnn_bandlimit
    coeffs = []
    for x in inputs:
        if isinstance(x, sphere.SphSignal):
            coeffs.append(nn.scnn_input_coeffs(x))
        else:
            coeffs.append(np.asarray(x, dtype=float))
    coeffs = np.array(coeffs)
    base = nn.forward_batch(model, coeffs)
    rng = np.random.default_rng(seed)
    devs = []
    for _ in range(n_rotations):
        rot = sphere.random_rotation(rng)
        blocks = sphere.rotation_blocks(rot, ll)
        rotated = np.empty_like(coeffs)
        for l in range(ll):
            sl = slice(l * l, (l + 1) * (l + 1))
            rotated[:, sl] = coeffs[:, sl] @ blocks[l].T
        out = nn.forward_batch(model, rotated)
        devs.append(np.abs(out - base))
    devs = np.array(devs)
    return float(devs.max()), float(devs.mean())


# ---------------------------------------------------------------------------
# emitters


def write_binned_csv(path, binned: BinnedRmse) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("bin_lo,bin_hi,count,rmse\n")
        for i in range(N_BINS):
            r = binned.rmse[i]
            rs = "nan" if np.isnan(r) else f"{r:.12g}"
            fh.write(f"{binned.edges[i]:.2f},{binned.edges[i + 1]:.2f},"
                     f"{binned.counts[i]},{rs}\n")


def write_tilemap_csv(path, tm: TileMap) -> None:
    centers = tm.centers()
    with open(path, "w", newline="\n") as fh:
        fh.write("tile_id,cx,cy,cz,count,mean_abs_err\n")
        for i in range(tm.values.size):
            v = tm.values[i]
            vs = "nan" if np.isnan(v) else f"{v:.12g}"
            fh.write(f"{i},{centers[i, 0]:.9f},{centers[i, 1]:.9f},"
                     f"{centers[i, 2]:.9f},{tm.counts[i]},{vs}\n")


def write_ttest_csv(path, rows) -> None:
    """rows: iterables of (model_a, model_b, bin_label, t, p)."""
    with open(path, "w", newline="\n") as fh:
        fh.write("model_a,model_b,bin,t,p\n")
        for ma, mb, label, t, p in rows:
            fh.write(f"{ma},{mb},{label},{t:.12g},{p:.12g}\n")


def _ramp_color(x: float) -> str:
    """Linear ramp dark blue -> yellow on [0, 1]."""
    x = min(max(x, 0.0), 1.0)
    r = int(round(255 * x))
    g = int(round(224 * x + 16))
    b = int(round(160 * (1.0 - x) + 32))
    return f"#{r:02x}{g:02x}{b:02x}"


def write_tilemap_svg(path, tm: TileMap) -> None:
    """Orthographic two-hemisphere heatmap, 800x400 canvas.

    Left panel: view onto +z; right panel: view onto -z (x mirrored).
    Tile fill is a linear ramp from the minimum (dark blue) to the
    maximum (yellow) occupied tile value.
    """
    occ = tm.occupied()
    vals = tm.values
    if occ.any():
        lo = float(np.nanmin(vals[occ]))
        hi = float(np.nanmax(vals[occ]))
    else:
        lo, hi = 0.0, 1.0
    span = (hi - lo) if hi > lo else 1.0
    centers = tm.faces.mean(axis=1)
    lines = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="800" height="400" '
        'viewBox="0 0 800 400">',
        f"<!-- tile mean_abs_err heatmap; linear color ramp: "
        f"value {lo:.6g} -> #0020a0 (dark blue), value {hi:.6g} -> #ffe000 "
        f"(yellow); left = +z hemisphere, right = -z hemisphere -->",
        '<rect width="800" height="400" fill="white"/>',
    ]
    for i, face in enumerate(tm.faces):
        north = centers[i, 2] >= 0
        cx = 200.0 if north else 600.0
        pts = []
        for vx, vy, vz in face:
            x = vx if north else -vx
            pts.append(f"{cx + 190 * x:.2f},{200 - 190 * vy:.2f}")
        if tm.counts[i] > 0:
            color = _ramp_color((vals[i] - lo) / span)
        else:
            color = "#dddddd"
        lines.append(f'<polygon points="{" ".join(pts)}" fill="{color}" '
                     f'stroke="#444444" stroke-width="0.5"/>')
    lines.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
