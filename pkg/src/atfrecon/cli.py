"""Command-line pipeline: synthesize, ingest, train, predict, evaluate,
ablate, fit the kernel baseline, and export heatmaps.

Every command writes its data artifacts atomically plus a run manifest
(<out>.manifest.json or manifest.json in the output directory) recording
the effective configuration, input checksums, seed, and wall clock, on
success and on failure alike.  Artifacts themselves carry no timestamps,
so a rerun with the same inputs and seed is byte-identical.

Exit codes: 0 ok, 2 invalid configuration, 3 I/O failure, 4 at least one
training bin diverged, 5 frequency coverage mismatch.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from . import evaluation as ev
from . import krr as kr
from . import models as md
from . import oracle as orc
from . import training as tr
from .core import (
    ATFDataset,
    DatasetFormatError,
    Position3,
    default_scenario,
    load_dataset,
    load_scenario,
    save_dataset,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    wavenumber_of,
)
from .fileio import canonical_json, config_hash, file_sha256, fmt_float, write_text_atomic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_TRAINING = 4
EXIT_COVERAGE = 5


class ConfigError(ValueError):
    pass


def _freq_tag(f: float) -> str:
    return f"{f:g}".replace(".", "p")


def _model_filename(f: float, part: str) -> str:
    return f"model_f{_freq_tag(f)}_{part}.json"


def _loss_filename(f: float, part: str) -> str:
    return f"loss_f{_freq_tag(f)}_{part}.csv"


def _krr_filename(f: float) -> str:
    return f"krr_f{_freq_tag(f)}.json"


class RunManifest:
    """Accumulates provenance for one command invocation."""

    def __init__(self, command: str, argv: list[str], seed, jobs):
        self.doc = {
            "tool": "atfrecon",
            "tool_version": __version__,
            "command": command,
            "argv": argv,
            "seed": seed,
            "jobs": jobs,
            "status": "running",
            "inputs": {},
            "outputs": [],
            "config_hash": "",
            "wall_clock_s": None,
        }
        self._t0 = time.perf_counter()

    def add_input(self, path: str) -> None:
        if path and os.path.exists(path):
            self.doc["inputs"][path] = file_sha256(path)

    def add_output(self, path: str) -> None:
        self.doc["outputs"].append(path)

    def set_config(self, obj) -> None:
        self.doc["effective_config"] = obj
        self.doc["config_hash"] = config_hash(obj)

    def extra(self, key: str, value) -> None:
        self.doc[key] = value

    def write(self, path: str, status: str, error: str | None = None) -> None:
        self.doc["status"] = status
        if error is not None:
            self.doc["error"] = error
        self.doc["wall_clock_s"] = round(time.perf_counter() - self._t0, 3)
        write_text_atomic(path, json.dumps(self.doc, indent=2, sort_keys=True) + "\n")


def _manifest_path(out: str) -> str:
    if os.path.isdir(out) or out.endswith(os.sep):
        return os.path.join(out, "manifest.json")
    return out + ".manifest.json"


def _load_json_file(path: str, what: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}")


def _scenario_from_args(args) -> "ScenarioConfig":
    if args.scenario is None:
        return default_scenario()
    doc = _load_json_file(args.scenario, "scenario file")
    try:
        return scenario_from_dict(doc)
    except (DatasetFormatError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


def _train_config_from_args(args) -> tr.TrainConfig:
    if args.config is not None:
        doc = _load_json_file(args.config, "train config")
        try:
            config = tr.TrainConfig.from_dict(doc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid train config: {exc}") from exc
    else:
        config = tr.TrainConfig()
    if getattr(args, "variant", None):
        config = replace(config, variant=args.variant)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


def _load_model_dir(path: str) -> dict[tr.BinKey, md.Model]:
    models: dict[tr.BinKey, md.Model] = {}
    if not os.path.isdir(path):
        raise FileNotFoundError(f"model directory not found: {path}")
    for name in sorted(os.listdir(path)):
        if name.startswith("model_") and name.endswith(".json"):
            model = md.load_model(os.path.join(path, name))
            models[(model.meta.frequency, model.meta.part)] = model
    if not models:
        raise ConfigError(f"no model files in {path}")
    return models


def _load_krr_dir(path: str) -> dict[float, kr.KRRModel]:
    models: dict[float, kr.KRRModel] = {}
    if not os.path.isdir(path):
        raise FileNotFoundError(f"kernel model directory not found: {path}")
    for name in sorted(os.listdir(path)):
        if name.startswith("krr_") and name.endswith(".json"):
            model = kr.load_krr(os.path.join(path, name))
            models[model.frequency] = model
    if not models:
        raise ConfigError(f"no kernel model files in {path}")
    return models


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(args, manifest: RunManifest) -> int:
    scenario = _scenario_from_args(args)
    manifest.add_input(args.scenario or "")
    manifest.set_config({"scenario": scenario_to_dict(scenario), "split": args.split})
    dataset = orc.synth_dataset(scenario, args.split)
    save_dataset(dataset, args.out)
    manifest.add_output(args.out)
    manifest.extra("n_samples", len(dataset.samples))
    return EXIT_OK


def cmd_ingest(args, manifest: RunManifest) -> int:
    manifest.add_input(args.manifest)
    dataset = orc.ingest_rir_directory(args.manifest)
    manifest.set_config({"manifest": args.manifest})
    save_dataset(dataset, args.out)
    manifest.add_output(args.out)
    manifest.extra("n_samples", len(dataset.samples))
    return EXIT_OK


def cmd_train(args, manifest: RunManifest) -> int:
    dataset = load_dataset(args.data)
    manifest.add_input(args.data)
    if args.config:
        manifest.add_input(args.config)
    config = _train_config_from_args(args)
    scenario = None
    if args.scenario:
        scenario = _scenario_from_args(args)
        manifest.add_input(args.scenario)
    manifest.set_config(config.to_dict())
    os.makedirs(args.out, exist_ok=True)
    result = tr.train_all_bins(dataset, scenario, config, jobs=args.jobs)
    lap_counts = {}
    for key in sorted(result.models):
        f, part = key
        model_path = os.path.join(args.out, _model_filename(f, part))
        md.save_model(result.models[key], model_path)
        loss_path = os.path.join(args.out, _loss_filename(f, part))
        result.reports[key].save_csv(loss_path)
        manifest.add_output(model_path)
        manifest.add_output(loss_path)
        lap_counts[f"{f:g}/{part}"] = result.reports[key].laplacian_evals
    manifest.extra("laplacian_evals", lap_counts)
    if result.failures:
        manifest.extra("failures", {f"{k[0]:g}/{k[1]}": v for k, v in result.failures.items()})
        return EXIT_TRAINING
    return EXIT_OK


def cmd_predict(args, manifest: RunManifest) -> int:
    models = _load_model_dir(args.models)
    manifest.add_input(args.pairs)
    manifest.set_config({"models": args.models, "pairs": args.pairs})
    predictor = ev.model_bank_predictor(models)
    frequencies = sorted({f for (f, _) in models})
    with open(args.pairs, "r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"rx", "ry", "rz", "sx", "sy", "sz"} <= set(reader.fieldnames):
            raise ConfigError("pairs file needs columns rx,ry,rz,sx,sy,sz[,f_hz]")
        has_freq = "f_hz" in reader.fieldnames
        rows = list(reader)
    buf = io.StringIO()
    buf.write("rx,ry,rz,sx,sy,sz,f_hz,p_re,p_im\n")
    for row in rows:
        r = Position3(float(row["rx"]), float(row["ry"]), float(row["rz"]))
        s = Position3(float(row["sx"]), float(row["sy"]), float(row["sz"]))
        freqs = [float(row["f_hz"])] if has_freq else frequencies
        for f in freqs:
            p = predictor(r, s, f)
            fields = (r.x, r.y, r.z, s.x, s.y, s.z, f, p.re, p.im)
            buf.write(",".join(fmt_float(v) for v in fields) + "\n")
    write_text_atomic(args.out, buf.getvalue())
    manifest.add_output(args.out)
    return EXIT_OK


def _predictors_from_args(args, manifest: RunManifest):
    predictors = []
    if args.models:
        predictors.append(("pinn", "", ev.model_bank_predictor(_load_model_dir(args.models))))
    if args.krr_models:
        predictors.append(("krr", "", ev.krr_bank_predictor(_load_krr_dir(args.krr_models))))
    if args.oracle_scenario:
        scenario = load_scenario(args.oracle_scenario)
        manifest.add_input(args.oracle_scenario)
        predictors.append(("oracle", "", orc.scenario_oracle_predictor(scenario)))
    if not predictors:
        raise ConfigError("provide at least one of --models / --krr-models / --oracle-scenario")
    return predictors


def cmd_eval(args, manifest: RunManifest) -> int:
    dataset = load_dataset(args.data)
    manifest.add_input(args.data)
    predictors = _predictors_from_args(args, manifest)
    manifest.set_config(
        {"data": args.data, "models": args.models, "krr_models": args.krr_models,
         "oracle_scenario": args.oracle_scenario}
    )
    table = ev.NMSETable()
    for method, variant, predictor in predictors:
        table = table.merged_with(ev.evaluate_method(predictor, dataset, method=method, variant=variant))
    table.config_hash = manifest.doc["config_hash"]
    table.save_csv(args.out)
    manifest.add_output(args.out)
    return EXIT_OK


def cmd_ablate(args, manifest: RunManifest) -> int:
    scenario = _scenario_from_args(args)
    if args.scenario:
        manifest.add_input(args.scenario)
    if args.config:
        manifest.add_input(args.config)
    config = _train_config_from_args(args)
    manifest.set_config(config.to_dict())
    result = ev.run_ablation(scenario, config, jobs=args.jobs)
    result.table.config_hash = manifest.doc["config_hash"]
    os.makedirs(args.out, exist_ok=True)
    table_path = os.path.join(args.out, "ablation.csv")
    result.table.save_csv(table_path)
    manifest.add_output(table_path)
    manifest.extra("swap_invariant", result.swap_invariant)
    if args.save_models:
        for variant, bank in result.models.items():
            vdir = os.path.join(args.out, variant)
            os.makedirs(vdir, exist_ok=True)
            for (f, part), model in sorted(bank.items()):
                path = os.path.join(vdir, _model_filename(f, part))
                md.save_model(model, path)
                manifest.add_output(path)
    if result.failures:
        manifest.extra(
            "failures",
            {variant: {f"{k[0]:g}/{k[1]}": msg for k, msg in fails.items()}
             for variant, fails in result.failures.items()},
        )
        return EXIT_TRAINING
    return EXIT_OK


def cmd_baseline(args, manifest: RunManifest) -> int:
    dataset = load_dataset(args.data)
    manifest.add_input(args.data)
    sigma_grid = [float(s) for s in args.sigma_grid.split(",")] if args.sigma_grid else None
    manifest.set_config(
        {"data": args.data, "sigma": args.sigma, "sigma_grid": sigma_grid, "symmetrize": not args.no_symmetrize}
    )
    os.makedirs(args.out, exist_ok=True)
    selections = {}
    for f in dataset.frequencies():
        samples = dataset.for_frequency(f)
        k = wavenumber_of(f, dataset.speed_of_sound)
        config = kr.KernelConfig(wavenumber=k, symmetrize=not args.no_symmetrize, regularization=args.sigma)
        if sigma_grid:
            sigma = kr.select_regularization(samples, config, sigma_grid, seed=args.seed or 0)
            config = kr.KernelConfig(wavenumber=k, symmetrize=config.symmetrize, regularization=sigma)
            selections[f"{f:g}"] = sigma
        model = kr.fit(samples, config)
        path = os.path.join(args.out, _krr_filename(f))
        kr.save_krr(model, path)
        manifest.add_output(path)
    if selections:
        manifest.extra("selected_sigma", selections)
    return EXIT_OK


def cmd_heatmap(args, manifest: RunManifest) -> int:
    scenario = _scenario_from_args(args)
    if args.scenario:
        manifest.add_input(args.scenario)
    manifest.set_config(
        {"source_index": args.source_index, "frequency": args.frequency, "part": args.part,
         "models": args.models, "truth": bool(args.truth_out)}
    )
    if args.models:
        predictor = ev.model_bank_predictor(_load_model_dir(args.models))
    else:
        predictor = orc.scenario_oracle_predictor(scenario)
    grid = ev.export_heatmap(predictor, scenario, args.source_index, args.frequency, args.part)
    grid.save_csv(args.out)
    manifest.add_output(args.out)
    if args.truth_out:
        truth = ev.oracle_heatmap(scenario, args.source_index, args.frequency, args.part)
        truth.save_csv(args.truth_out)
        manifest.add_output(args.truth_out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing and dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atfrecon",
        description="Region-to-region acoustic transfer function reconstruction toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"atfrecon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the configured random seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel frequency bins")
    common.add_argument("--config", default=None, help="train-config JSON file")
    common.add_argument("--out", required=True, help="output file or directory")

    p = sub.add_parser("synth", parents=[common], help="synthesize a dataset from an analytic scenario")
    p.add_argument("--scenario", default=None, help="scenario JSON (omit for the built-in default)")
    p.add_argument("--split", choices=("train", "test"), required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="build a dataset from impulse-response files")
    p.add_argument("--manifest", required=True, help="RIR manifest JSON")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", parents=[common], help="train per-frequency models")
    p.add_argument("--data", required=True, help="training dataset file")
    p.add_argument("--scenario", default=None, help="scenario JSON for geometry-aware collocation")
    p.add_argument("--variant", choices=tr.VARIANTS, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="predict at listed (receiver, source) pairs")
    p.add_argument("--models", required=True, help="directory of trained model files")
    p.add_argument("--pairs", required=True, help="CSV with rx,ry,rz,sx,sy,sz[,f_hz]")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="score predictors against a dataset")
    p.add_argument("--data", required=True, help="test dataset file")
    p.add_argument("--models", default=None, help="directory of trained network models")
    p.add_argument("--krr-models", default=None, help="directory of kernel baseline models")
    p.add_argument("--oracle-scenario", default=None, help="scenario JSON to score the analytic field")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="train and score all four model variants")
    p.add_argument("--scenario", default=None)
    p.add_argument("--save-models", action="store_true", help="also write every trained model")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("baseline", parents=[common], help="fit the kernel ridge regression baseline")
    p.add_argument("--data", required=True, help="training dataset file")
    p.add_argument("--sigma", type=float, default=0.0, help="fixed regularization")
    p.add_argument("--sigma-grid", default=None, help="comma-separated candidates for selection")
    p.add_argument("--no-symmetrize", action="store_true")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("heatmap", parents=[common], help="export a receiver-plane field grid")
    p.add_argument("--scenario", default=None)
    p.add_argument("--models", default=None, help="model directory (omit to export the oracle field)")
    p.add_argument("--source-index", type=int, required=True)
    p.add_argument("--frequency", type=float, required=True)
    p.add_argument("--part", choices=("real", "imag"), default="real")
    p.add_argument("--truth-out", default=None, help="also export the oracle ground truth here")
    p.set_defaults(func=cmd_heatmap)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    manifest = RunManifest(args.command, argv, seed=args.seed, jobs=getattr(args, "jobs", 1))
    manifest_path = _manifest_path(args.out)
    try:
        code = args.func(args, manifest)
    except ev.CoverageError as exc:  # before ValueError: it is one
        manifest.write(manifest_path, "error", f"{type(exc).__name__}: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COVERAGE
    except tr.TrainingDiverged as exc:
        manifest.write(manifest_path, "error", f"{type(exc).__name__}: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (ConfigError, DatasetFormatError, orc.IngestError, ValueError) as exc:
        manifest.write(manifest_path, "error", f"{type(exc).__name__}: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        manifest.write(manifest_path, "error", f"{type(exc).__name__}: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    manifest.write(manifest_path, "ok" if code == EXIT_OK else "partial-failure")
    return code


if __name__ == "__main__":
    sys.exit(main())
