"""Flat key=value configuration with section headers.

File format::

    # comment
    [phantom]
    snr = 20
    seed = 42

Keys are addressed as "section.key".  Every key can be overridden on the
command line with ``--section.key value``.
"""
from __future__ import annotations

DEFAULTS = {
    "paths.out_dir": "runs/exp",
    "paths.schemes_dir": "schemes",
    "phantom.n_train_voxels": 12800,
    "phantom.n_test_voxels": 4000,
    "phantom.n_test_subjects": 12,
    "phantom.n_voxels": 12800,
    "phantom.n_subjects": 1,
    "phantom.snr": 20.0,
    "phantom.md_mean": 0.0007,
    "phantom.md_sd": 0.0001,
    "phantom.fa_max": 0.95,
    "phantom.orientation_mode": "uniform",
    "phantom.seed": 42,
    "phantom.test_seed_offset": 1000,
    "train.epochs": 50,
    "train.learning_rate": 0.001,
    "train.batch_size": 32,
    "train.seed": 7,
    "model.scnn_bandlimit": 8,
    "model.scnn_oversample": 2,
    "model.scnn_channels": "1,8,8",
    "model.readout_hidden": 32,
    "model.fcn_layers": "6,100,100,10,1",
    "experiment.train_scheme": "skare6",
    "experiment.test_schemes": "skare6,jones6",
    "experiment.starve_fraction": 0.1,
    "experiment.b_value": 1000.0,
    "experiment.scheme_seed": 11,
    "experiment.scheme_restarts": 8,
    "experiment.scheme_iters": 800,
    "experiment.equiv_rotations": 100,
    "experiment.equiv_inputs": 50,
}


def _coerce(key: str, raw: str):
    default = DEFAULTS.get(key)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_file(path) -> dict:
    out = {}
    section = ""
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            full = f"{section}.{key.strip()}" if section else key.strip()
            out[full] = value.strip()
    return out


def load_config(path=None, overrides=None) -> dict:
    """Defaults, then file values, then CLI overrides."""
    cfg = dict(DEFAULTS)
    raw = {}
    if path is not None:
        raw.update(parse_config_file(path))
    if overrides:
        raw.update(overrides)
    for key, value in raw.items():
        if key not in DEFAULTS:
            raise KeyError(f"unknown configuration key {key!r}")
        cfg[key] = _coerce(key, value) if isinstance(value, str) else value
    return cfg


def write_config(cfg: dict, path) -> None:
    """Resolved config in the file format, keys grouped by section."""
    sections: dict[str, list] = {}
    for key in sorted(cfg):
        section, _, short = key.partition(".")
        sections.setdefault(section, []).append((short, cfg[key]))
    with open(path, "w", newline="\n") as fh:
        for section, items in sections.items():
            fh.write(f"[{section}]\n")
            for short, value in items:
                fh.write(f"{short} = {value}\n")
            fh.write("\n")


def int_tuple(cfg: dict, key: str) -> tuple:
    return tuple(int(x) for x in str(cfg[key]).split(","))


def str_list(cfg: dict, key: str) -> list:
    return [s.strip() for s in str(cfg[key]).split(",") if s.strip()]
