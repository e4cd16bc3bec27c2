"""Run-configuration files: TOML in, validated dataclasses out.

The schema is strict: unknown keys anywhere are rejected, and every run
directory receives a frozen JSON copy of the fully resolved configuration.
Overrides use dotted keys, e.g. --set train.eta_alpha=2.5.
"""

from __future__ import annotations

import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict

from .data import BlobSpec, Dataset, make_blobs, read_csv_dataset, read_idx_dataset, standardize
from .errors import ConfigError
from .noise import NoiseSpec, apply_noise, holdout_split
from .numerics import make_rng
from .trainer import DataBundle, ModelSpec, TrainConfig

_DATASET_KEYS = {
    "blobs": {"classes", "per_class", "dims", "separation", "std", "seed",
              "test_per_class", "standardize"},
    "csv": {"train_path", "test_path", "num_classes", "standardize"},
    "idx": {"train_images", "train_labels", "test_images", "test_labels",
            "num_classes", "flatten", "standardize"},
}
_NOISE_KEYS = {"kind", "rate", "seed", "exclude_self", "class_map", "group_size"}
_SPLIT_KEYS = {"validation_fraction", "seed"}
_MODEL_KEYS = {"arch", "hidden"}
_TRAIN_KEYS = {"variant", "loss", "epochs", "batch_size", "lr", "momentum",
               "weight_decay", "milestones", "decay_factor", "eta_alpha",
               "i_alpha", "seed"}
_TOP_KEYS = {"dataset", "noise", "split", "model", "train", "output"}
_OUTPUT_KEYS = {"dir"}


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {sorted(unknown)}")


def load_config_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc


def _parse_override_value(raw: str):
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw  # bare string


def apply_overrides(config: dict, overrides) -> dict:
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form dotted.key=value")
        dotted, raw = item.split("=", 1)
        keys = dotted.strip().split(".")
        node = config
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {dotted!r} descends into a non-table")
        node[keys[-1]] = _parse_override_value(raw.strip())
    return config


def validate_config(raw: dict):
    """Check the whole document and build typed specs. Returns a dict of
    parsed sections; no file or dataset work happens here."""
    _reject_unknown(raw, _TOP_KEYS, "top level")
    if "dataset" not in raw or "train" not in raw:
        raise ConfigError("config must contain [dataset] and [train] sections")

    ds = dict(raw["dataset"])
    kind = ds.pop("kind", None)
    if kind not in _DATASET_KEYS:
        raise ConfigError(f"dataset.kind must be one of {sorted(_DATASET_KEYS)}")
    _reject_unknown(ds, _DATASET_KEYS[kind], "dataset")

    noise_raw = dict(raw.get("noise", {"kind": "none"}))
    _reject_unknown(noise_raw, _NOISE_KEYS, "noise")
    if "class_map" in noise_raw and noise_raw["class_map"] is not None:
        # 1-based pairs in the file
        noise_raw["class_map"] = [(int(a) - 1, int(b) - 1)
                                  for a, b in noise_raw["class_map"]]
    noise = NoiseSpec(**{"kind": "none", **noise_raw})

    split_raw = dict(raw.get("split", {}))
    _reject_unknown(split_raw, _SPLIT_KEYS, "split")
    split = {"validation_fraction": float(split_raw.get("validation_fraction", 0.1)),
             "seed": int(split_raw.get("seed", noise.seed + 1))}

    model_raw = dict(raw.get("model", {}))
    _reject_unknown(model_raw, _MODEL_KEYS, "model")
    model = ModelSpec(**model_raw)
    if model.arch not in ("linear", "mlp"):
        raise ConfigError(f"model.arch must be linear or mlp, not {model.arch!r}")

    train_raw = dict(raw["train"])
    _reject_unknown(train_raw, _TRAIN_KEYS, "train")
    train = TrainConfig(**train_raw)

    output_raw = dict(raw.get("output", {}))
    _reject_unknown(output_raw, _OUTPUT_KEYS, "output")

    return {"dataset_kind": kind, "dataset": ds, "noise": noise, "split": split,
            "model": model, "train": train,
            "output_dir": output_raw.get("dir", "runs"), "raw": raw}


def load_dataset(kind: str, ds: dict):
    """Materialize (clean train Dataset, clean test Dataset)."""
    if kind == "blobs":
        spec = BlobSpec(c=int(ds.get("classes", 3)),
                        per_class=int(ds.get("per_class", 1000)),
                        m=int(ds.get("dims", 2)),
                        separation=float(ds.get("separation", 4.0)),
                        std=float(ds.get("std", 1.0)),
                        seed=int(ds.get("seed", 0)))
        train = make_blobs(spec)
        test_spec = BlobSpec(c=spec.c, per_class=int(ds.get("test_per_class", 500)),
                             m=spec.m, separation=spec.separation, std=spec.std,
                             seed=spec.seed + 1_000_003)
        test = make_blobs(test_spec)
        default_std = False
    elif kind == "csv":
        train, _ = read_csv_dataset(ds["train_path"], ds.get("num_classes"))
        test, _ = read_csv_dataset(ds["test_path"], ds.get("num_classes", train.c))
        default_std = False
    elif kind == "idx":
        train = read_idx_dataset(ds["train_images"], ds["train_labels"],
                                 ds.get("num_classes"), ds.get("flatten", True))
        test = read_idx_dataset(ds["test_images"], ds["test_labels"],
                                ds.get("num_classes", train.c), ds.get("flatten", True))
        default_std = True
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}")
    if train.c != test.c:
        raise ConfigError("train and test class counts differ")
    if ds.get("standardize", default_std):
        transform = standardize(train.features)
        train = Dataset(transform(train.features), train.labels, train.c, train.name)
        test = Dataset(transform(test.features), test.labels, test.c, test.name)
    return train, test


def build_bundle(parsed: dict) -> DataBundle:
    train_clean, test = load_dataset(parsed["dataset_kind"], parsed["dataset"])
    noisy = apply_noise(train_clean, parsed["noise"])
    tr, val = holdout_split(noisy, parsed["split"]["validation_fraction"],
                            make_rng(parsed["split"]["seed"]))
    return DataBundle(train=tr, validation=val, test=test)


def resolved_json(parsed: dict) -> str:
    doc = {
        "dataset": {"kind": parsed["dataset_kind"], **parsed["dataset"]},
        "noise": asdict(parsed["noise"]),
        "split": parsed["split"],
        "model": asdict(parsed["model"]),
        "train": asdict(parsed["train"]),
        "output": {"dir": parsed["output_dir"]},
    }
    return json.dumps(doc, sort_keys=True, indent=2)
