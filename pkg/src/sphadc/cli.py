"""Command-line surface.

Subcommands are thin wrappers over the library modules::

    sphadc gen-scheme --kind jones --n 6 --seed 11 --out jones6.txt
    sphadc gen-data   --config run.cfg --out data.ds
    sphadc fit        --data data.ds --scheme skare6 --out fit_fa.csv
    sphadc train      --model scnn --data data.ds --scheme skare6 \
                      --config run.cfg --out scnn.model
    sphadc predict    --model scnn.model --data data.ds --scheme skare6 \
                      --out pred.csv
    sphadc eval       --pred pred.csv --data data.ds --out-prefix out/eval
    sphadc equiv-test --model scnn.model --rotations 100 --out equiv.csv
    sphadc exp1       --config run.cfg
    sphadc exp2       --config run.cfg

Any configuration key can be overridden with ``--section.key value``.
The SPHADC_THREADS environment variable caps worker parallelism (all
reductions are ordered, so results are identical for any setting).
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as cfgmod
from . import datagen as dg
from . import experiments, metrics, nn, schemes


def worker_cap() -> int:
    try:
        return max(1, int(os.environ.get("SPHADC_THREADS", "1")))
    except ValueError:
        return 1


def _split_overrides(argv):
    """Separate --section.key value pairs from regular arguments."""
    rest, overrides = [], {}
    i = 0
    while i < len(argv):
        a = argv[i]
        if a.startswith("--") and "." in a.split("=", 1)[0]:
            if "=" in a:
                key, value = a[2:].split("=", 1)
            else:
                key = a[2:]
                i += 1
                if i >= len(argv):
                    raise SystemExit(f"missing value for override --{key}")
                value = argv[i]
            overrides[key] = value
        else:
            rest.append(a)
        i += 1
    return rest, overrides


def _load_cfg(args, overrides) -> dict:
    return cfgmod.load_config(getattr(args, "config", None), overrides)


def cmd_gen_scheme(args, overrides):
    rng = np.random.default_rng(args.seed)
    fn = {"jones": schemes.optimize_jones, "skare": schemes.optimize_skare}[args.kind]
    scheme = fn(args.n, rng, restarts=args.restarts, iters=args.iters, b=args.b)
    scheme = schemes.GradientScheme(scheme.dirs, scheme.b,
                                    f"{args.kind}{args.n}")
    schemes.save_scheme(scheme, args.out)
    if scheme.n >= 6:
        quality = f"kappa={schemes.condition_number(scheme):.4f}"
    else:
        quality = f"energy={schemes.electrostatic_energy(scheme.dirs):.4f}"
    print(f"wrote {args.out} ({quality})")
    return 0


def cmd_gen_data(args, overrides):
    cfg = _load_cfg(args, overrides)
    names = cfgmod.str_list(cfg, "experiment.test_schemes")
    out_dir = os.path.dirname(os.path.abspath(args.out))
    scheme_list = [experiments.resolve_scheme(n, cfg, out_dir) for n in names]
    pcfg = dg.PhantomConfig(
        n_voxels=cfg["phantom.n_voxels"], n_subjects=cfg["phantom.n_subjects"],
        snr=cfg["phantom.snr"], md_mean=cfg["phantom.md_mean"],
        md_sd=cfg["phantom.md_sd"], fa_max=cfg["phantom.fa_max"],
        orientation_mode=cfg["phantom.orientation_mode"],
        seed=cfg["phantom.seed"])
    ds = dg.build_dataset(pcfg, scheme_list)
    dg.save_dataset(ds, args.out)
    print(f"wrote {args.out} ({ds.n} voxels, schemes {names})")
    return 0


def cmd_fit(args, overrides):
    from . import tensor as tm
    ds = dg.load_dataset(args.data)
    scheme = ds.scheme(args.scheme)
    pred = np.empty(ds.n)
    for i in range(ds.n):
        dt = tm.fit_dt_exact(ds.signals[args.scheme][i], scheme.dirs, scheme.b)
        pred[i] = tm.fractional_anisotropy(tm.eigendecompose(dt))
    experiments.write_predictions_csv(args.out, pred)
    print(f"wrote {args.out}")
    return 0


def cmd_train(args, overrides):
    cfg = _load_cfg(args, overrides)
    ds = dg.load_dataset(args.data)
    fcn_spec, scnn_spec = experiments.model_specs(cfg)
    tcfg = experiments.train_config(cfg)
    if args.model == "fcn":
        model = nn.init_model(fcn_spec, seed=tcfg.seed)
        x = ds.signals[args.scheme]
    else:
        model = nn.init_model(scnn_spec, seed=tcfg.seed)
        x = experiments.scnn_features(ds, args.scheme,
                                      scnn_spec.scnn_bandlimit)
    model, trace = nn.train(model, x, ds.fa_gt, tcfg)
    nn.save_model(model, args.out)
    experiments.write_loss_trace(os.path.splitext(args.out)[0] + "_loss.csv",
                                 trace)
    print(f"wrote {args.out} (final epoch mse {trace[-1]:.6g})")
    return 0


def cmd_predict(args, overrides):
    model = nn.load_model(args.model)
    ds = dg.load_dataset(args.data)
    if model.spec.kind == "fcn":
        x = ds.signals[args.scheme]
    else:
        x = experiments.scnn_features(ds, args.scheme,
                                      model.spec.scnn_bandlimit)
    experiments.write_predictions_csv(args.out, nn.predict_batch(model, x))
    print(f"wrote {args.out}")
    return 0


def _read_predictions(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline()
        if "fa_pred" not in header:
            raise ValueError(f"{path} is not a predictions CSV")
        return np.array([float(line.split(",")[1]) for line in fh])


def cmd_eval(args, overrides):
    ds = dg.load_dataset(args.data)
    pred = _read_predictions(args.pred)
    if pred.size != ds.n:
        raise SystemExit("prediction count does not match dataset")
    os.makedirs(os.path.dirname(os.path.abspath(args.out_prefix)) or ".",
                exist_ok=True)
    metrics.write_binned_csv(args.out_prefix + "_rmse.csv",
                             metrics.rmse_binned(pred, ds.fa_gt))
    table = experiments.per_subject_binned(ds, pred)
    experiments.write_subject_binned_csv(
        args.out_prefix + "_rmse_by_subject.csv", table)
    tile = metrics.sphere_tile_map(pred, ds.fa_gt, ds.principal_axes())
    metrics.write_tilemap_csv(args.out_prefix + "_tilemap.csv", tile)
    metrics.write_tilemap_svg(args.out_prefix + "_tilemap.svg", tile)
    print(f"wrote {args.out_prefix}_*.csv/svg")
    return 0


def cmd_equiv_test(args, overrides):
    model = nn.load_model(args.model)
    ll = model.spec.scnn_bandlimit
    rng = np.random.default_rng(args.seed)
    pcfg = dg.PhantomConfig(n_voxels=1, n_subjects=1, seed=args.seed)
    from . import sphere, tensor as tm
    grid = sphere.SphGrid(ll)
    inputs = []
    for _ in range(args.inputs):
        dt = dg.sample_ground_truth_dt(rng, pcfg)
        inputs.append(nn.scnn_input_coeffs(sphere.sample_adc(dt, grid)))
    mx, mean = metrics.equivariance_error(model, inputs, args.rotations,
                                          seed=args.seed)
    with open(args.out, "w", newline="\n") as fh:
        fh.write("n_inputs,n_rotations,max_dev,mean_dev\n")
        fh.write(f"{args.inputs},{args.rotations},{mx:.12g},{mean:.12g}\n")
    print(f"wrote {args.out} (max |delta| = {mx:.3e})")
    return 0


def cmd_exp1(args, overrides):
    cfg = _load_cfg(args, overrides)
    manifest = experiments.run_experiment1(cfg)
    print(f"wrote {manifest}")
    return 0


def cmd_exp2(args, overrides):
    cfg = _load_cfg(args, overrides)
    manifest = experiments.run_experiment2(cfg)
    print(f"wrote {manifest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sphadc", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scheme", help="generate a gradient scheme")
    g.add_argument("--kind", choices=("jones", "skare"), required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--restarts", type=int, default=20)
    g.add_argument("--iters", type=int, default=800)
    g.add_argument("--b", type=float, default=1000.0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_scheme)

    g = sub.add_parser("gen-data", help="generate a phantom dataset")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    g = sub.add_parser("fit", help="conventional exact DT fit baseline")
    g.add_argument("--data", required=True)
    g.add_argument("--scheme", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_fit)

    g = sub.add_parser("train", help="train a model on a dataset")
    g.add_argument("--model", choices=("fcn", "scnn"), required=True)
    g.add_argument("--data", required=True)
    g.add_argument("--scheme", required=True)
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_train)

    g = sub.add_parser("predict", help="predict FA for a dataset")
    g.add_argument("--model", required=True)
    g.add_argument("--data", required=True)
    g.add_argument("--scheme", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_predict)

    g = sub.add_parser("eval", help="evaluate predictions against a dataset")
    g.add_argument("--pred", required=True)
    g.add_argument("--data", required=True)
    g.add_argument("--out-prefix", required=True)
    g.set_defaults(func=cmd_eval)

    g = sub.add_parser("equiv-test", help="rotation-invariance measurement")
    g.add_argument("--model", required=True)
    g.add_argument("--rotations", type=int, default=100)
    g.add_argument("--inputs", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_equiv_test)

    g = sub.add_parser("exp1", help="scheme-robustness experiment")
    g.add_argument("--config")
    g.set_defaults(func=cmd_exp1)

    g = sub.add_parser("exp2", help="orientation-robustness experiment")
    g.add_argument("--config")
    g.set_defaults(func=cmd_exp2)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    rest, overrides = _split_overrides(argv)
    args = build_parser().parse_args(rest)
    try:
        return args.func(args, overrides)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
