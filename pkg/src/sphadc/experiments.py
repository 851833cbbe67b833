"""Experiment harness: full scheme-robustness and orientation-robustness runs.

Experiment 1 trains the FCN and the SCNN on one gradient scheme and
evaluates both on the training scheme and on an unseen scheme.
Experiment 2 trains on phantoms whose primary fibre orientation is
restricted to the anterior-posterior axis (plus a data-starved SCNN)
and evaluates on uniformly oriented phantoms, including orientation
tile maps.

Every run writes its resolved config, per-model binned-RMSE CSVs,
paired t-test CSVs, model files, loss traces and a manifest with
sha256 hashes of all artifacts.
"""
from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from . import config as cfgmod
from . import datagen as dg
from . import metrics, nn, schemes, sphere, tensor


def resolve_scheme(name: str, cfg: dict, out_dir: str) -> schemes.GradientScheme:
    """Load a named scheme fixture or generate and persist it.

    Names are `<kind><n>` with kind jones or skare, e.g. "skare6".
    """
    schemes_dir = cfg["paths.schemes_dir"]
    path = os.path.join(schemes_dir, f"{name}.txt")
    if os.path.exists(path):
        return schemes.load_scheme(path, name=name)
    kind = name.rstrip("0123456789")
    n = int(name[len(kind):])
    rng = np.random.default_rng(cfg["experiment.scheme_seed"])
    kwargs = dict(restarts=cfg["experiment.scheme_restarts"],
                  iters=cfg["experiment.scheme_iters"],
                  b=cfg["experiment.b_value"])
    if kind == "jones":
        scheme = schemes.optimize_jones(n, rng, **kwargs)
    elif kind == "skare":
        scheme = schemes.optimize_skare(n, rng, **kwargs)
    else:
        raise ValueError(f"unknown scheme kind in name {name!r}")
    scheme = schemes.GradientScheme(scheme.dirs, scheme.b, name)
    os.makedirs(schemes_dir, exist_ok=True)
    schemes.save_scheme(scheme, path)
    return scheme


def scnn_features(ds: dg.Dataset, scheme_name: str, bandlimit: int) -> np.ndarray:
    """SCNN inputs for every voxel of a dataset.

    Exploits the 1-to-1 mapping of 6 normalized signals to a tensor:
    exact fit, then the ADC profile sampled on the network grid,
    expressed as scaled SH coefficients.  The map depends on the scheme
    only through the exact fit.
    """
    scheme = ds.scheme(scheme_name)
    if scheme.n != 6:
        raise ValueError("SCNN features need a 6-direction scheme")
    x6 = tensor.quadratic_form_rows(scheme.dirs)
    sv = np.linalg.svd(x6, compute_uv=False)
    if sv[-1] <= 0 or sv[0] / sv[-1] > tensor.COND_LIMIT:
        raise tensor.SingularDirections(scheme_name)
    logs = -np.log(np.maximum(ds.signals[scheme_name], tensor.SIGNAL_CLAMP))
    d6 = (logs / scheme.b) @ np.linalg.inv(x6).T        # (n, 6) tensors
    grid = sphere.SphGrid(bandlimit)
    q = tensor.quadratic_form_rows(grid.directions())   # (npix, 6)
    plan = sphere.get_plan(grid)
    to_coeffs = (plan.analysis @ q) / nn.ADC_SCALE      # (L^2, 6)
    return d6 @ to_coeffs.T


def model_specs(cfg: dict) -> tuple[nn.ModelSpec, nn.ModelSpec]:
    fcn = nn.ModelSpec(kind="fcn",
                       fcn_layers=cfgmod.int_tuple(cfg, "model.fcn_layers"))
    scnn = nn.ModelSpec(kind="scnn",
                        scnn_channels=cfgmod.int_tuple(cfg, "model.scnn_channels"),
                        scnn_bandlimit=cfg["model.scnn_bandlimit"],
                        scnn_oversample=cfg["model.scnn_oversample"],
                        readout_hidden=cfg["model.readout_hidden"])
    return fcn, scnn


def train_config(cfg: dict) -> nn.TrainConfig:
    return nn.TrainConfig(epochs=cfg["train.epochs"],
                          learning_rate=cfg["train.learning_rate"],
                          batch_size=cfg["train.batch_size"],
                          seed=cfg["train.seed"])


def per_subject_binned(ds: dg.Dataset, pred: np.ndarray) -> np.ndarray:
    """(n_subjects, 5) per-subject per-bin RMSE; NaN for empty bins."""
    out = []
    for j in range(ds.header["n_subjects"]):
        mask = ds.subject_mask(j)
        out.append(metrics.rmse_binned(pred[mask], ds.fa_gt[mask]).rmse)
    return np.array(out)


def write_loss_trace(path, trace) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("epoch,mse\n")
        for i, mse in enumerate(trace):
            fh.write(f"{i},{mse:.12g}\n")


def write_subject_binned_csv(path, table: np.ndarray) -> None:
    edges = np.linspace(0.0, 1.0, metrics.N_BINS + 1)
    with open(path, "w", newline="\n") as fh:
        fh.write("subject,bin_lo,bin_hi,rmse\n")
        for j in range(table.shape[0]):
            for b in range(metrics.N_BINS):
                v = table[j, b]
                vs = "nan" if np.isnan(v) else f"{v:.12g}"
                fh.write(f"{j},{edges[b]:.2f},{edges[b + 1]:.2f},{vs}\n")


def write_predictions_csv(path, pred: np.ndarray) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("index,fa_pred\n")
        for i, v in enumerate(pred):
            fh.write(f"{i},{v:.12g}\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir: str, cfg: dict, files: list[str]) -> str:
    from . import __version__
    manifest = {
        "version": __version__,
        "config": {k: cfg[k] for k in sorted(cfg)},
        "outputs": {os.path.basename(f): _sha256(f) for f in sorted(files)},
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


class RunOutputs:
    """Collects artifact paths so the manifest can hash everything."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.files: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        p = os.path.join(self.out_dir, name)
        self.files.append(p)
        return p


def _datasets_exp(cfg: dict, scheme_list, train_mode: str):
    train_cfg = dg.PhantomConfig(
        n_voxels=cfg["phantom.n_train_voxels"], n_subjects=1,
        snr=cfg["phantom.snr"], md_mean=cfg["phantom.md_mean"],
        md_sd=cfg["phantom.md_sd"], fa_max=cfg["phantom.fa_max"],
        orientation_mode=train_mode, seed=cfg["phantom.seed"])
    test_cfg = dg.PhantomConfig(
        n_voxels=cfg["phantom.n_test_voxels"],
        n_subjects=cfg["phantom.n_test_subjects"],
        snr=cfg["phantom.snr"], md_mean=cfg["phantom.md_mean"],
        md_sd=cfg["phantom.md_sd"], fa_max=cfg["phantom.fa_max"],
        orientation_mode="uniform",
        seed=cfg["phantom.seed"] + cfg["phantom.test_seed_offset"])
    return dg.build_dataset(train_cfg, scheme_list), \
        dg.build_dataset(test_cfg, scheme_list)


def _train_models(cfg, run, train_ds, train_scheme, starve: bool = False):
    """FCN + SCNN (+ optionally a data-starved SCNN) on one scheme."""
    fcn_spec, scnn_spec = model_specs(cfg)
    tcfg = train_config(cfg)
    models = {}

    fcn = nn.init_model(fcn_spec, seed=tcfg.seed)
    fcn, trace = nn.train(fcn, train_ds.signals[train_scheme],
                          train_ds.fa_gt, tcfg)
    nn.save_model(fcn, run.path("fcn.model"))
    write_loss_trace(run.path("fcn_loss.csv"), trace)
    models["fcn"] = fcn

    feats = scnn_features(train_ds, train_scheme, scnn_spec.scnn_bandlimit)
    scnn = nn.init_model(scnn_spec, seed=tcfg.seed)
    scnn, trace = nn.train(scnn, feats, train_ds.fa_gt, tcfg)
    nn.save_model(scnn, run.path("scnn.model"))
    write_loss_trace(run.path("scnn_loss.csv"), trace)
    models["scnn"] = scnn

    if starve:
        frac = cfg["experiment.starve_fraction"]
        rng = np.random.default_rng(tcfg.seed + 1)
        keep = np.sort(rng.choice(feats.shape[0],
                                  size=max(1, int(feats.shape[0] * frac)),
                                  replace=False))
        starved = nn.init_model(scnn_spec, seed=tcfg.seed)
        starved, trace = nn.train(starved, feats[keep],
                                  train_ds.fa_gt[keep], tcfg)
        nn.save_model(starved, run.path("scnn_starved.model"))
        write_loss_trace(run.path("scnn_starved_loss.csv"), trace)
        models["scnn_starved"] = starved
    return models


def _evaluate(cfg, run, models, test_ds, scheme_names):
    """Predictions plus pooled and per-subject binned RMSE for each pair."""
    _, scnn_spec = model_specs(cfg)
    preds = {}
    tables = {}
    for mname, model in models.items():
        for sname in scheme_names:
            if model.spec.kind == "fcn":
                x = test_ds.signals[sname]
            else:
                x = scnn_features(test_ds, sname, scnn_spec.scnn_bandlimit)
            pred = nn.predict_batch(model, x)
            preds[(mname, sname)] = pred
            tag = f"{mname}_{sname}"
            write_predictions_csv(run.path(f"pred_{tag}.csv"), pred)
            metrics.write_binned_csv(run.path(f"rmse_{tag}.csv"),
                                     metrics.rmse_binned(pred, test_ds.fa_gt))
            table = per_subject_binned(test_ds, pred)
            tables[(mname, sname)] = table
            write_subject_binned_csv(run.path(f"rmse_by_subject_{tag}.csv"),
                                     table)
    return preds, tables


def _bin_labels():
    edges = np.linspace(0.0, 1.0, metrics.N_BINS + 1)
    return [f"{edges[b]:.1f}-{edges[b + 1]:.1f}"
            for b in range(metrics.N_BINS)]


def _ttest_rows(tables, pairs):
    rows = []
    labels = _bin_labels()
    for name_a, name_b in pairs:
        for b in range(metrics.N_BINS):
            t, p, _ = metrics.paired_ttest_flagged(tables[name_a][:, b],
                                                   tables[name_b][:, b])
            rows.append(("_".join(name_a), "_".join(name_b), labels[b], t, p))
    return rows


def run_experiment1(cfg: dict) -> str:
    """Scheme-robustness run; returns the manifest path."""
    run = RunOutputs(cfg["paths.out_dir"])
    train_scheme = cfg["experiment.train_scheme"]
    test_schemes = cfgmod.str_list(cfg, "experiment.test_schemes")
    names = list(dict.fromkeys([train_scheme] + test_schemes))
    scheme_list = [resolve_scheme(n, cfg, run.out_dir) for n in names]
    for s in scheme_list:
        schemes.save_scheme(s, run.path(f"scheme_{s.name}.txt"))

    train_ds, test_ds = _datasets_exp(cfg, scheme_list, "uniform")
    dg.save_dataset(train_ds, run.path("train.ds"))
    dg.save_dataset(test_ds, run.path("test.ds"))

    models = _train_models(cfg, run, train_ds, train_scheme)
    preds, tables = _evaluate(cfg, run, models, test_ds, names)

    pairs = []
    for mname in models:
        for sname in test_schemes:
            if sname != train_scheme:
                pairs.append(((mname, sname), (mname, train_scheme)))
    metrics.write_ttest_csv(run.path("ttests.csv"), _ttest_rows(tables, pairs))

    cfgmod.write_config(cfg, run.path("config_resolved.cfg"))
    return write_manifest(run.out_dir, cfg, run.files)


def run_experiment2(cfg: dict) -> str:
    """Orientation-robustness run (AP-restricted training, starved SCNN)."""
    run = RunOutputs(cfg["paths.out_dir"])
    train_scheme = cfg["experiment.train_scheme"]
    scheme_list = [resolve_scheme(train_scheme, cfg, run.out_dir)]
    schemes.save_scheme(scheme_list[0], run.path(f"scheme_{train_scheme}.txt"))

    train_ds, test_ds = _datasets_exp(cfg, scheme_list, "ap_restricted")
    dg.save_dataset(train_ds, run.path("train.ds"))
    dg.save_dataset(test_ds, run.path("test.ds"))

    models = _train_models(cfg, run, train_ds, train_scheme, starve=True)
    preds, tables = _evaluate(cfg, run, models, test_ds, [train_scheme])

    pairs = [(("fcn", train_scheme), ("scnn", train_scheme)),
             (("scnn_starved", train_scheme), ("scnn", train_scheme))]
    metrics.write_ttest_csv(run.path("ttests.csv"), _ttest_rows(tables, pairs))

    axes = test_ds.principal_axes()
    for mname in ("fcn", "scnn", "scnn_starved"):
        tile = metrics.sphere_tile_map(preds[(mname, train_scheme)],
                                       test_ds.fa_gt, axes)
        metrics.write_tilemap_csv(run.path(f"tilemap_{mname}.csv"), tile)
        metrics.write_tilemap_svg(run.path(f"tilemap_{mname}.svg"), tile)

    cfgmod.write_config(cfg, run.path("config_resolved.cfg"))
    return write_manifest(run.out_dir, cfg, run.files)
