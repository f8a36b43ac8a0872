"""Benchmark driver: sweeps goodness objectives over a dataset and
writes diff-able result artifacts.

Outputs under --out:
    results.csv          one row per goodness, frozen column order
    results.json         full metadata: config echo, power model,
                         per-phase cost breakdown, interpretation notes
    series/<name>.csv    per-epoch training curves for each goodness
    checkpoints/<name>.ffck

Config file (TOML or JSON) keys mirror FFConfig plus:
    dataset, goodness (string or list), out, power model fields
    (watts_per_gflops, baseline_watts, grid_intensity_g_per_kwh),
    goodness_params.* overrides.
Precedence: built-in defaults < config file < command-line flags.
"""

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys

import numpy as np

from .checkpoint import config_to_dict, save_checkpoint
from .data import DATASET_NAMES, load_dataset
from .engine import FFConfig, train_network
from .errors import FFBenchError
from .goodness import GoodnessParams, registry_names
from .metering import CostMeter, PowerModel, estimate_footprint

__all__ = ["main", "run_benchmark", "emit_plot_data", "build_run_config"]

RESULT_COLUMNS = (
    "goodness", "class_acc", "multipass_acc", "class_loss",
    "emissions_g", "energy_kwh", "flops", "seed", "config_hash",
)

DESK_SCALE = {
    "layer_sizes": (500, 500),
    "epochs": 5,
    "train_subset": 10000,
    "eval_subset": 1000,
}

_CONFIG_ONLY_KEYS = {
    "dataset", "goodness", "out", "desk_scale",
    "watts_per_gflops", "baseline_watts", "grid_intensity_g_per_kwh",
    "goodness_params",
}


def _load_config_file(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    text = raw.decode("utf-8")
    if path.endswith(".json") or text.lstrip().startswith("{"):
        return json.loads(text)
    try:
        import tomllib
    except ImportError:  # Python < 3.11
        import tomli as tomllib
    return tomllib.loads(text)


def build_run_config(args):
    """Merge defaults, the config file, and flags into
    (FFConfig-per-goodness template, dataset, goodness list, power
    model, out dir)."""
    file_cfg = _load_config_file(args.config) if args.config else {}
    unknown = set(file_cfg) - _CONFIG_ONLY_KEYS - {
        f.name for f in dataclasses.fields(FFConfig)
    }
    if unknown:
        raise FFBenchError(f"unknown config keys {sorted(unknown)}")

    ff_kwargs = {
        k: v for k, v in file_cfg.items()
        if k in {f.name for f in dataclasses.fields(FFConfig)}
        and k not in ("goodness", "goodness_params")
    }
    if "layer_sizes" in ff_kwargs:
        ff_kwargs["layer_sizes"] = tuple(ff_kwargs["layer_sizes"])
    if ff_kwargs.get("multipass_layers") is not None:
        ff_kwargs["multipass_layers"] = tuple(ff_kwargs["multipass_layers"])
    params = GoodnessParams(**file_cfg.get("goodness_params", {}))

    desk = args.desk_scale or bool(file_cfg.get("desk_scale"))
    if desk:
        for key, value in DESK_SCALE.items():
            ff_kwargs.setdefault(key, value)
    if args.epochs is not None:
        ff_kwargs["epochs"] = args.epochs
    if args.seed is not None:
        ff_kwargs["seed"] = args.seed
    cfg = FFConfig(goodness_params=params, **ff_kwargs)

    dataset = args.dataset or file_cfg.get("dataset")
    if not dataset:
        raise FFBenchError("no dataset given (flag --dataset or config key)")

    goodness = args.goodness or file_cfg.get("goodness") or ["sum_of_squares"]
    if isinstance(goodness, str):
        goodness = [goodness]
    if "all" in goodness:
        goodness = list(registry_names())

    power = PowerModel(
        watts_per_gflops=float(file_cfg.get("watts_per_gflops", 1.0)),
        baseline_watts=float(file_cfg.get("baseline_watts", 0.0)),
        grid_intensity_g_per_kwh=float(file_cfg.get("grid_intensity_g_per_kwh", 475.0)),
    )
    out_dir = args.out or file_cfg.get("out") or "ffbench-out"
    return cfg, dataset, goodness, power, out_dir


def config_hash(cfg, dataset_name):
    """Hash of every semantically meaningful field (not output paths)."""
    payload = {"config": config_to_dict(cfg), "dataset": dataset_name}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _format_value(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _series_columns(num_layers):
    cols = ["epoch", "multipass_accuracy", "probe_accuracy", "probe_loss",
            "cumulative_flops"]
    for metric in ("ff_loss", "ff_accuracy", "goodness_pos", "goodness_neg"):
        cols.extend(f"{metric}_layer{i}" for i in range(num_layers))
    return cols


def _write_series(path, metrics, num_layers):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_series_columns(num_layers))
        for row in metrics.epochs:
            values = [row.epoch, row.multipass_accuracy, row.probe_accuracy,
                      row.probe_loss, row.cumulative_flops]
            for metric in ("ff_loss", "ff_accuracy", "goodness_pos", "goodness_neg"):
                values.extend(getattr(row, metric))
            writer.writerow([_format_value(v) for v in values])


def run_benchmark(cfg, dataset_name, goodness_list, power, out_dir, data_dir=None):
    """Train every goodness on the dataset; returns the result rows."""
    dataset = load_dataset(dataset_name, data_dir)
    os.makedirs(out_dir, exist_ok=True)
    series_dir = os.path.join(out_dir, "series")
    ckpt_dir = os.path.join(out_dir, "checkpoints")
    os.makedirs(series_dir, exist_ok=True)
    os.makedirs(ckpt_dir, exist_ok=True)

    rows = []
    detail = []
    for name in goodness_list:
        run_cfg = cfg.with_overrides(goodness=name)
        meter = CostMeter()
        layers, metrics, rng = train_network(dataset, run_cfg, meter)
        snapshot = meter.read()
        energy_kwh, emissions_g = estimate_footprint(snapshot, power)
        final = metrics.final
        rows.append({
            "goodness": name,
            "class_acc": final.probe_accuracy,
            "multipass_acc": final.multipass_accuracy,
            "class_loss": final.probe_loss,
            "emissions_g": emissions_g,
            "energy_kwh": energy_kwh,
            "flops": snapshot.flops,
            "seed": run_cfg.seed,
            "config_hash": config_hash(run_cfg, dataset_name),
        })
        detail.append({
            "goodness": name,
            "flops_by_phase": dict(snapshot.phase_flops),
            "wall_seconds": snapshot.wall_seconds,
            "wall_seconds_by_phase": dict(snapshot.phase_wall_seconds),
            "flop_counter_saturated": snapshot.saturated,
        })
        _write_series(os.path.join(series_dir, f"{name}.csv"),
                      metrics, len(run_cfg.layer_sizes))
        save_checkpoint(
            os.path.join(ckpt_dir, f"{name}.ffck"),
            run_cfg, layers, rng, dataset.dim, dataset.num_classes,
            extra={"epochs_done": run_cfg.epochs},
        )

    with open(os.path.join(out_dir, "results.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([_format_value(row[c]) for c in RESULT_COLUMNS])

    metadata = {
        "dataset": dataset_name,
        "config": config_to_dict(cfg),
        "goodness_list": list(goodness_list),
        "power_model": dataclasses.asdict(power),
        "energy_formula": (
            "energy_kwh = (watts_per_gflops * flops/1e9"
            " + baseline_watts * wall_seconds) / 3.6e6;"
            " emissions_g = energy_kwh * grid_intensity_g_per_kwh"
        ),
        "notes": {
            "optimizer": "Adam with beta1=0.9 (the configured momentum), "
                         "beta2=0.999, eps=1e-8, decoupled weight decay",
            "multipass_layers": "all layers except the first unless overridden",
            "eval_subset": "first eval_subset rows of the test split",
            "flop_model": "matrix multiplies only (2*m*k*n per product); "
                          "elementwise work is not counted",
        },
        "runs": detail,
    }
    with open(os.path.join(out_dir, "results.json"), "w") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return rows


def emit_plot_data(series_dir, out_path, allow_partial=False):
    """Normalize series/*.csv into one long-format CSV with columns
    (epoch, metric, layer, goodness, value)."""
    if not os.path.isdir(series_dir):
        raise FFBenchError(f"series directory {series_dir} does not exist")
    names = sorted(f for f in os.listdir(series_dir) if f.endswith(".csv"))
    if not names:
        raise FFBenchError(f"no series files in {series_dir}")

    bad = []
    out_rows = []
    for fname in names:
        goodness = fname[:-4]
        path = os.path.join(series_dir, fname)
        try:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                for record in reader:
                    epoch = record["epoch"]
                    for key, value in record.items():
                        if key == "epoch":
                            continue
                        if "_layer" in key:
                            metric, layer = key.rsplit("_layer", 1)
                        else:
                            metric, layer = key, ""
                        out_rows.append((epoch, metric, layer, goodness, value))
        except (KeyError, OSError, csv.Error) as exc:
            bad.append(f"{fname}: {exc}")
    if bad and not allow_partial:
        raise FFBenchError(
            "unreadable series files (use --emit-plot-data-partial to skip): "
            + "; ".join(bad)
        )
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch", "metric", "layer", "goodness", "value"))
        writer.writerows(out_rows)
    return len(out_rows), bad


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ffbench",
        description="Layer-local forward-forward training benchmark",
    )
    parser.add_argument("--config", help="TOML or JSON config file")
    parser.add_argument("--dataset", choices=DATASET_NAMES)
    parser.add_argument(
        "--goodness", action="append",
        help="objective name from the registry, repeatable; 'all' sweeps all 21",
    )
    parser.add_argument("--seed", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument(
        "--desk-scale", action="store_true",
        help="preset: layers [500,500], 5 epochs, 10k train, 1k eval subset",
    )
    parser.add_argument("--out", help="output directory (default ffbench-out)")
    parser.add_argument(
        "--emit-plot-data", action="store_true",
        help="after the runs, write plot_data.csv melted from series/*.csv",
    )
    parser.add_argument(
        "--emit-plot-data-partial", action="store_true",
        help="tolerate unreadable series files when emitting plot data",
    )
    parser.add_argument("--data-dir", help="overrides FF_DATA_DIR")
    parser.add_argument("--list-goodness", action="store_true",
                        help="print the registry and exit")
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.list_goodness:
        for name in registry_names():
            print(name)
        return 0
    try:
        cfg, dataset, goodness_list, power, out_dir = build_run_config(args)
        run_benchmark(cfg, dataset, goodness_list, power, out_dir, args.data_dir)
        if args.emit_plot_data or args.emit_plot_data_partial:
            count, bad = emit_plot_data(
                os.path.join(out_dir, "series"),
                os.path.join(out_dir, "plot_data.csv"),
                allow_partial=args.emit_plot_data_partial,
            )
            for warning in bad:
                print(f"skipped series: {warning}", file=sys.stderr)
    except (FFBenchError, OSError, ValueError, KeyError) as exc:
        json.dump(
            {"error": type(exc).__name__, "message": str(exc)},
            sys.stderr, sort_keys=True,
        )
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
