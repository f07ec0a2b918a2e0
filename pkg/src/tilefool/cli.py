"""Command-line front end.

    tilefool craft    --model desk_cnn_cifar10 --alpha 8 --epsilon 10/255 ...
    tilefool eval     --artifact runs/craft-.../artifact.uap --model desk_cnn_cifar10
    tilefool transfer --artifacts a.uap b.uap --models desk_cnn_cifar10
    tilefool ablate   --artifact a.uap --regions top_left,full
    tilefool sweep    --grid 10x1,10x10 --alphas 1,8 --seeds 0,1,2
    tilefool render   --artifact a.uap
    tilefool report   --inputs runs/eval-*/report.jsonl

Configuration is layered: built-in defaults < --config YAML file < explicit
flags. Every run writes its fully resolved configuration snapshot into a
fresh run directory (never silently overwriting an existing one), so any run
can be reproduced from its own snapshot.

Exit codes: 0 success, 2 invalid usage/config (all violations listed at
once), 1 runtime failure, 130 interrupted. Errors are emitted as one JSON
line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import yaml

from .artifact import build_metadata, load_artifact, save_artifact
from .attack import craft, craft_data_free
from .errors import ConfigError, TilefoolError
from .evaluation import (data_efficiency_sweep, fooling_ratio, position_ablation,
                         render_reports_table, targeted_fooling_ratio, transfer_sweep,
                         write_jsonl)
from .modelzoo.adapters import available_models, load_classifier
from .modelzoo.data import sample_dataset
from .tiling import MASK_KINDS, MaskRegion
from .types import (LABEL_MODES, LOSS_IDS, SPLITS, STEP_RULES, SURROGATE_KINDS,
                    AttackConfig, DatasetSpec, NormBudget, TileSpec)
from .viz import render_visuals

SUBCOMMANDS = ("craft", "eval", "transfer", "ablate", "sweep", "render", "report")

_REGION_ALIASES = {"tl": "top_left", "tr": "top_right",
                   "bl": "bottom_left", "br": "bottom_right"}

_CRAFT_DEFAULTS = {
    "model": "desk_cnn_cifar10",
    "source": "synth10",
    "classes": 10,
    "per_class": 50,
    "split": "train",
    "alpha": 8,
    "epsilon": "10/255",
    "norm": "linf",
    "epochs": 20,
    "batch_size": 100,
    "loss": "ce",
    "kappa": 0.0,
    "target": None,
    "step_rule": "adam",
    "step_size": 0.01,
    "seed": 0,
    "data_free": False,
    "clamp": True,
    "label_mode": "dataset",
    "surrogate": "uniform",
    "surrogate_per_epoch": 1000,
}

_EVAL_DEFAULTS = {
    "source": "synth10", "classes": 10, "per_class": 50, "split": "validation",
    "seed": 0, "model": "desk_cnn_cifar10", "target": None, "batch_size": 256,
}

DEFAULTS: dict[str, dict] = {
    "craft": _CRAFT_DEFAULTS,
    "eval": _EVAL_DEFAULTS,
    "transfer": {"source": "synth10", "classes": 10, "per_class": 30,
                 "split": "validation", "seed": 0, "workers": 1},
    "ablate": {**_EVAL_DEFAULTS,
               "regions": "top_left,top_right,bottom_left,bottom_right,full"},
    "sweep": {**_CRAFT_DEFAULTS, "grid": "10x1,10x10", "alphas": "1,8", "seeds": "0",
              "eval_classes": 10, "eval_per_class": 30, "eval_seed": 1000},
    "render": {"pairs": 4, "source": "synth10", "classes": 10, "per_class": 1,
               "split": "validation", "seed": 0},
    "report": {},
}


def parse_epsilon(text) -> float:
    """Accept a plain float or an exact 'a/b' fraction like 10/255."""
    if isinstance(text, (int, float)):
        return float(text)
    text = str(text).strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def parse_int_list(text) -> list[int]:
    return [int(tok) for tok in str(text).split(",") if tok.strip()]


def parse_grid(text) -> list[tuple[int, int]]:
    """'10x1,10x10' -> [(10, 1), (10, 10)]."""
    cells = []
    for tok in str(text).split(","):
        tok = tok.strip()
        if not tok:
            continue
        c, n = tok.lower().split("x", 1)
        cells.append((int(c), int(n)))
    return cells


def parse_regions(text) -> list[str]:
    kinds = []
    for tok in str(text).split(","):
        tok = tok.strip().lower()
        if not tok:
            continue
        kinds.append(_REGION_ALIASES.get(tok, tok))
    return kinds


# --------------------------------------------------------------------------
# Config resolution
# --------------------------------------------------------------------------

def resolve_config(subcommand: str, config_path: Optional[str], cli_values: dict) -> dict:
    """defaults < config file < explicit flags; unknown file keys are violations."""
    resolved = dict(DEFAULTS[subcommand])
    violations = []
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError([f"config file not found: {config_path}"])
        loaded = yaml.safe_load(path.read_text()) or {}
        if not isinstance(loaded, dict):
            raise ConfigError([f"config file must hold a mapping, got {type(loaded).__name__}"])
        for key, value in loaded.items():
            if key not in resolved and subcommand != "report":
                violations.append(f"unknown config key {key!r} for subcommand {subcommand}")
            else:
                resolved[key] = value
    for key, value in cli_values.items():
        if value is not None:
            resolved[key] = value
    if violations:
        raise ConfigError(violations)
    return resolved


def _check(violations: list, ok: bool, message: str) -> bool:
    if not ok:
        violations.append(message)
    return ok


def _parse_norm(violations, raw) -> Optional[str]:
    norm = {"linf": "inf", "inf": "inf", "l2": "2", "2": "2"}.get(str(raw).lower())
    _check(violations, norm is not None, f"norm must be linf or l2, got {raw!r}")
    return norm


def _parse_eps(violations, raw) -> Optional[float]:
    try:
        eps = parse_epsilon(raw)
    except (ValueError, ZeroDivisionError):
        violations.append(f"epsilon must be a number or a/b fraction, got {raw!r}")
        return None
    _check(violations, eps > 0, f"epsilon must be positive, got {eps}")
    return eps


def _load_model(violations, model_id):
    if not _check(violations, model_id in available_models(),
                  f"unknown model {model_id!r}; available: {available_models()}"):
        return None
    return load_classifier(model_id)


def validate_craft_config(cfg: dict):
    """Full static validation; returns (adapter, spec, budget, attack_config)."""
    v: list[str] = []
    _check(v, isinstance(cfg["epochs"], int) and cfg["epochs"] >= 0,
           f"epochs must be a non-negative integer, got {cfg['epochs']!r}")
    _check(v, isinstance(cfg["batch_size"], int) and cfg["batch_size"] >= 1,
           f"batch_size must be a positive integer, got {cfg['batch_size']!r}")
    _check(v, cfg["loss"] in LOSS_IDS, f"loss must be one of {LOSS_IDS}, got {cfg['loss']!r}")
    _check(v, cfg["kappa"] >= 0, f"kappa must be non-negative, got {cfg['kappa']!r}")
    _check(v, cfg["step_rule"] in STEP_RULES,
           f"step_rule must be one of {STEP_RULES}, got {cfg['step_rule']!r}")
    _check(v, cfg["step_size"] > 0, f"step_size must be positive, got {cfg['step_size']!r}")
    _check(v, cfg["split"] in SPLITS, f"split must be one of {SPLITS}, got {cfg['split']!r}")
    _check(v, cfg["label_mode"] in LABEL_MODES,
           f"label_mode must be one of {LABEL_MODES}, got {cfg['label_mode']!r}")
    _check(v, cfg["surrogate"] in SURROGATE_KINDS,
           f"surrogate must be one of {SURROGATE_KINDS}, got {cfg['surrogate']!r}")
    if cfg["data_free"]:
        _check(v, cfg["loss"] == "cos_sim", "data-free crafting requires --loss cos_sim")
    if cfg["target"] is not None:
        _check(v, cfg["loss"] == "ce", "targeted crafting requires --loss ce")
    norm = _parse_norm(v, cfg["norm"])
    eps = _parse_eps(v, cfg["epsilon"])
    _check(v, isinstance(cfg["alpha"], int) and cfg["alpha"] >= 1,
           f"alpha must be a positive integer, got {cfg['alpha']!r}")

    adapter = _load_model(v, cfg["model"])
    spec = None
    if adapter is not None and isinstance(cfg["alpha"], int) and cfg["alpha"] >= 1:
        if adapter.input_h % cfg["alpha"] or adapter.input_w % cfg["alpha"]:
            v.append(f"alpha={cfg['alpha']} must divide the model input "
                     f"{adapter.input_h}x{adapter.input_w}")
        else:
            spec = TileSpec(cfg["alpha"], adapter.input_h, adapter.input_w)
        if cfg["target"] is not None:
            _check(v, 0 <= cfg["target"] < adapter.class_count,
                   f"target label {cfg['target']} out of range "
                   f"[0, {adapter.class_count})")
    if v:
        raise ConfigError(v)
    budget = NormBudget(p=norm, epsilon=eps)
    attack = AttackConfig(
        epochs=cfg["epochs"], batch_size=cfg["batch_size"], loss_id=cfg["loss"],
        kappa=float(cfg["kappa"]), target_label=cfg["target"],
        step_rule=cfg["step_rule"], step_size=float(cfg["step_size"]),
        seed=int(cfg["seed"]), data_free=bool(cfg["data_free"]),
        clamp_inputs=bool(cfg["clamp"]), label_mode=cfg["label_mode"],
        surrogate=cfg["surrogate"], surrogate_per_epoch=int(cfg["surrogate_per_epoch"]))
    return adapter, spec, budget, attack


# --------------------------------------------------------------------------
# Run directories
# --------------------------------------------------------------------------

def prepare_run_dir(out: Optional[str], subcommand: str, resolved: dict) -> Path:
    if out is None:
        out = f"runs/{subcommand}-{datetime.now(timezone.utc).strftime('%Y%m%dT%H%M%SZ')}"
    run_dir = Path(out)
    if run_dir.exists():
        raise ConfigError([f"run directory already exists, refusing to overwrite: {run_dir}"])
    run_dir.mkdir(parents=True)
    (run_dir / "config.yaml").write_text(yaml.safe_dump(resolved, sort_keys=True))
    _write_run_status(run_dir, "running", subcommand)
    return run_dir


def _write_run_status(run_dir: Path, status: str, subcommand: str) -> None:
    (run_dir / "run.json").write_text(json.dumps({
        "subcommand": subcommand, "status": status,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "toolkit_version": __import__("tilefool").__version__}, indent=2))


# --------------------------------------------------------------------------
# Subcommand handlers
# --------------------------------------------------------------------------

def _cmd_craft(args) -> int:
    cfg = resolve_config("craft", args.config, _explicit(args, _CRAFT_DEFAULTS))
    adapter, spec, budget, attack = validate_craft_config(cfg)
    run_dir = prepare_run_dir(args.out, "craft", cfg)
    try:
        # stream the log so an interrupted run still leaves it finalized
        log_file = open(run_dir / "craft_log.jsonl", "w")

        def on_record(rec):
            log_file.write(json.dumps({"epoch": rec.epoch, "iteration": rec.iteration,
                                       "loss": rec.loss, "norm": rec.norm,
                                       "wall_ms": rec.wall_ms}) + "\n")
            log_file.flush()

        try:
            dataset_spec = None
            if attack.data_free:
                patch, delta, log = craft_data_free(adapter, spec, budget, attack,
                                                    on_record=on_record)
            else:
                dataset = sample_dataset(cfg["source"], cfg["classes"],
                                         cfg["per_class"], cfg["split"], attack.seed,
                                         image_hw=adapter.input_hw)
                dataset_spec = dataset.spec
                patch, delta, log = craft(dataset, adapter, spec, budget, attack,
                                          on_record=on_record)
        finally:
            log_file.close()
        meta = build_metadata(spec=spec, budget=budget, config=attack,
                              source_model=adapter.model_id, dataset_spec=dataset_spec)
        artifact_path = run_dir / "artifact.uap"
        save_artifact(artifact_path, patch, spec, budget, meta)
        final_loss = log.records[-1].loss if log.records else float("nan")
        final_norm = log.records[-1].norm if log.records else 0.0
        print(f"crafted alpha={spec.alpha} {budget.p}-eps={budget.epsilon:.6g} "
              f"loss={final_loss:.4f} norm={final_norm:.6g} -> {artifact_path}")
        _write_run_status(run_dir, "complete", "craft")
        return 0
    except BaseException:
        _write_run_status(run_dir, "incomplete", "craft")
        raise


def _cmd_eval(args) -> int:
    cfg = resolve_config("eval", args.config, _explicit(args, _EVAL_DEFAULTS))
    v: list[str] = []
    _check(v, args.artifact is not None, "--artifact is required")
    adapter = _load_model(v, cfg["model"])
    _check(v, cfg["split"] in SPLITS, f"split must be one of {SPLITS}")
    if v:
        raise ConfigError(v)
    art = load_artifact(args.artifact)
    cfg["artifact"] = str(args.artifact)
    run_dir = prepare_run_dir(args.out, "eval", cfg)
    try:
        testset = sample_dataset(cfg["source"], cfg["classes"], cfg["per_class"],
                                 cfg["split"], int(cfg["seed"]),
                                 image_hw=adapter.input_hw)
        target = cfg["target"]
        if target is None:
            target = art.metadata.get("target_label")
        if target is not None:
            report = targeted_fooling_ratio(art.perturbation, adapter, testset,
                                            int(target), uap_metadata=art.metadata,
                                            batch_size=int(cfg["batch_size"]))
        else:
            report = fooling_ratio(art.perturbation, adapter, testset,
                                   uap_metadata=art.metadata,
                                   batch_size=int(cfg["batch_size"]))
        write_jsonl(run_dir / "report.jsonl", [report.to_record()])
        (run_dir / "report.txt").write_text(render_reports_table([report]) + "\n")
        tfr = ("" if report.targeted_fooling_ratio is None
               else f" TFR={report.targeted_fooling_ratio * 100:.2f}%")
        print(f"FR={report.fooling_ratio * 100:.2f}%{tfr} on {adapter.model_id} "
              f"(N={report.n_evaluated}) -> {run_dir / 'report.jsonl'}")
        _write_run_status(run_dir, "complete", "eval")
        return 0
    except BaseException:
        _write_run_status(run_dir, "incomplete", "eval")
        raise


def _cmd_transfer(args) -> int:
    cfg = resolve_config("transfer", args.config, _explicit(args, DEFAULTS["transfer"]))
    v: list[str] = []
    _check(v, bool(args.artifacts), "--artifacts requires at least one artifact path")
    _check(v, bool(args.models), "--models requires at least one model id")
    for model_id in args.models or []:
        _check(v, model_id in available_models(), f"unknown model {model_id!r}")
    if v:
        raise ConfigError(v)
    cfg["artifacts"] = [str(a) for a in args.artifacts]
    cfg["models"] = list(args.models)
    run_dir = prepare_run_dir(args.out, "transfer", cfg)
    try:
        testset_spec = DatasetSpec(
            source_id=cfg["source"], class_count=max(int(cfg["classes"]), 1),
            classes_chosen=int(cfg["classes"]), per_class=int(cfg["per_class"]),
            split=cfg["split"], seed=int(cfg["seed"]))
        matrix = transfer_sweep(cfg["artifacts"], cfg["models"], testset_spec,
                                max_workers=int(cfg["workers"]))
        write_jsonl(run_dir / "matrix.jsonl", matrix.records())
        table = matrix.render()
        (run_dir / "matrix.txt").write_text(table + "\n")
        print(table)
        _write_run_status(run_dir, "complete", "transfer")
        return 0
    except BaseException:
        _write_run_status(run_dir, "incomplete", "transfer")
        raise


def _cmd_ablate(args) -> int:
    cfg = resolve_config("ablate", args.config, _explicit(args, DEFAULTS["ablate"]))
    v: list[str] = []
    _check(v, args.artifact is not None, "--artifact is required")
    adapter = _load_model(v, cfg["model"])
    kinds = parse_regions(cfg["regions"])
    for kind in kinds:
        _check(v, kind in MASK_KINDS, f"unknown mask region {kind!r}; one of {MASK_KINDS}")
    if v:
        raise ConfigError(v)
    art = load_artifact(args.artifact)
    cfg["artifact"] = str(args.artifact)
    cfg["regions"] = ",".join(kinds)
    run_dir = prepare_run_dir(args.out, "ablate", cfg)
    try:
        regions = [MaskRegion(kind, art.spec) for kind in kinds]
        testset = sample_dataset(cfg["source"], cfg["classes"], cfg["per_class"],
                                 cfg["split"], int(cfg["seed"]),
                                 image_hw=adapter.input_hw)
        reports = position_ablation(art.perturbation, adapter, testset, regions,
                                    uap_metadata=art.metadata)
        write_jsonl(run_dir / "ablation.jsonl", [r.to_record() for r in reports])
        table = render_reports_table(reports)
        (run_dir / "ablation.txt").write_text(table + "\n")
        print(table)
        _write_run_status(run_dir, "complete", "ablate")
        return 0
    except BaseException:
        _write_run_status(run_dir, "incomplete", "ablate")
        raise


def _cmd_sweep(args) -> int:
    cfg = resolve_config("sweep", args.config, _explicit(args, DEFAULTS["sweep"]))
    adapter, _, budget, attack = validate_craft_config({**cfg, "alpha": 1})
    v: list[str] = []
    try:
        grid = parse_grid(cfg["grid"])
        _check(v, bool(grid), "grid must contain at least one cxn cell")
    except ValueError:
        v.append(f"grid must look like '10x1,10x10', got {cfg['grid']!r}")
        grid = []
    alphas = parse_int_list(cfg["alphas"])
    seeds = parse_int_list(cfg["seeds"])
    _check(v, bool(alphas), "alphas must contain at least one value")
    for alpha in alphas:
        _check(v, adapter.input_h % alpha == 0 and adapter.input_w % alpha == 0,
               f"alpha={alpha} must divide the model input "
               f"{adapter.input_h}x{adapter.input_w}")
    if v:
        raise ConfigError(v)
    run_dir = prepare_run_dir(args.out, "sweep", cfg)
    try:
        testset = sample_dataset(cfg["source"], int(cfg["eval_classes"]),
                                 int(cfg["eval_per_class"]), "validation",
                                 int(cfg["eval_seed"]), image_hw=adapter.input_hw)
        table = data_efficiency_sweep(grid, alphas, adapter, budget, attack,
                                      cfg["source"], testset, seeds=seeds)
        write_jsonl(run_dir / "sweep.jsonl", table.records())
        rendered = table.render()
        (run_dir / "sweep.txt").write_text(rendered + "\n")
        print(rendered)
        _write_run_status(run_dir, "complete", "sweep")
        return 0
    except BaseException:
        _write_run_status(run_dir, "incomplete", "sweep")
        raise


def _cmd_render(args) -> int:
    cfg = resolve_config("render", args.config, _explicit(args, DEFAULTS["render"]))
    if args.artifact is None:
        raise ConfigError(["--artifact is required"])
    art = load_artifact(args.artifact)
    cfg["artifact"] = str(args.artifact)
    run_dir = prepare_run_dir(args.out, "render", cfg)
    try:
        images = None
        if int(cfg["pairs"]) > 0:
            h, w, _ = art.perturbation.shape
            testset = sample_dataset(cfg["source"], int(cfg["classes"]),
                                     int(cfg["per_class"]), cfg["split"],
                                     int(cfg["seed"]), image_hw=(h, w))
            images = testset.images
        written = render_visuals(art.perturbation, run_dir, images=images,
                                 metadata=art.metadata, max_pairs=int(cfg["pairs"]))
        print(f"wrote {len(written)} files under {run_dir}")
        _write_run_status(run_dir, "complete", "render")
        return 0
    except BaseException:
        _write_run_status(run_dir, "incomplete", "render")
        raise


def _cmd_report(args) -> int:
    if not args.inputs:
        raise ConfigError(["--inputs requires at least one report file or run directory"])
    from .evaluation import read_jsonl
    from .types import EvalReport

    paths: list[Path] = []
    for item in args.inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.jsonl")))
        elif p.exists():
            paths.append(p)
        else:
            raise ConfigError([f"input not found: {item}"])

    sections = []
    for path in paths:
        records = read_jsonl(path)
        eval_reports = [EvalReport.from_record(r) for r in records
                        if r.get("type") == "eval_report"]
        lines = [f"== {path}"]
        if eval_reports:
            lines.append(render_reports_table(eval_reports))
        others = [r for r in records if r.get("type") != "eval_report"]
        for rec in others:
            if rec.get("type") == "transfer_cell":
                body = ("ERR " + rec["error"] if rec.get("error")
                        else f"FR={rec['report']['fooling_ratio'] * 100:.2f}%")
                lines.append(f"  {rec['artifact_id']} -> {rec['target_model']}: {body}")
            elif rec.get("type") == "sweep_cell":
                body = ("ERR " + rec["error"] if rec.get("error")
                        else f"median FR={rec['median_fr'] * 100:.2f}%")
                lines.append(f"  alpha={rec['alpha']} (c,n)=({rec['c']},{rec['n']}): {body}")
        sections.append("\n".join(lines))
    output = "\n\n".join(sections)
    print(output)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(output + "\n")
    return 0


# --------------------------------------------------------------------------
# Argument parsing and dispatch
# --------------------------------------------------------------------------

def _explicit(args, defaults: dict) -> dict:
    """CLI values that were actually provided (argparse defaults are None)."""
    return {key: getattr(args, key) for key in defaults if hasattr(args, key)}


def _add_common(p, keys: dict) -> None:
    p.add_argument("--config", help="YAML config file (defaults < file < flags)")
    p.add_argument("--out", help="run directory (default runs/<subcmd>-<timestamp>)")
    typed = {
        "model": str, "source": str, "classes": int, "per_class": int, "split": str,
        "seed": int, "alpha": int, "epsilon": str, "norm": str, "epochs": int,
        "batch_size": int, "loss": str, "kappa": float, "target": int,
        "step_rule": str, "step_size": float, "label_mode": str, "surrogate": str,
        "surrogate_per_epoch": int, "workers": int, "regions": str, "grid": str,
        "alphas": str, "seeds": str, "eval_classes": int, "eval_per_class": int,
        "eval_seed": int, "pairs": int,
    }
    for key in keys:
        if key in ("data_free", "clamp"):
            continue
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, type=typed[key], default=None, dest=key)
    if "data_free" in keys:
        p.add_argument("--data-free", action="store_const", const=True, default=None,
                       dest="data_free")
    if "clamp" in keys:
        p.add_argument("--no-clamp", action="store_const", const=False, default=None,
                       dest="clamp")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tilefool",
        description="Craft and evaluate tiled universal adversarial perturbations.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("craft", help="optimize a texture patch against a classifier")
    _add_common(p, _CRAFT_DEFAULTS)

    p = sub.add_parser("eval", help="fooling ratio of an artifact on a model")
    p.add_argument("--artifact", required=False)
    _add_common(p, _EVAL_DEFAULTS)

    p = sub.add_parser("transfer", help="artifacts x target models fooling-ratio matrix")
    p.add_argument("--artifacts", nargs="+", default=None)
    p.add_argument("--models", nargs="+", default=None)
    _add_common(p, DEFAULTS["transfer"])

    p = sub.add_parser("ablate", help="fooling ratio of block-masked variants")
    p.add_argument("--artifact", required=False)
    _add_common(p, DEFAULTS["ablate"])

    p = sub.add_parser("sweep", help="data-efficiency sweep over (c,n) x alpha")
    _add_common(p, DEFAULTS["sweep"])

    p = sub.add_parser("render", help="write display images for an artifact")
    p.add_argument("--artifact", required=False)
    _add_common(p, DEFAULTS["render"])

    p = sub.add_parser("report", help="re-render tables from persisted records")
    p.add_argument("--inputs", nargs="+", default=None)
    p.add_argument("--out", default=None)
    return parser


_HANDLERS = {
    "craft": _cmd_craft, "eval": _cmd_eval, "transfer": _cmd_transfer,
    "ablate": _cmd_ablate, "sweep": _cmd_sweep, "render": _cmd_render,
    "report": _cmd_report,
}


def _emit_error(kind: str, message: str, violations=None) -> None:
    payload = {"error": kind, "message": message}
    if violations:
        payload["violations"] = violations
    print(json.dumps(payload), file=sys.stderr)


def run_subcommand(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.subcommand](args)
    except ConfigError as exc:
        _emit_error("ConfigError", "invalid configuration", exc.violations)
        return 2
    except KeyboardInterrupt:
        _emit_error("Interrupted", "run interrupted; partial outputs were finalized")
        return 130
    except TilefoolError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1


def main() -> None:
    sys.exit(run_subcommand(sys.argv[1:]))


if __name__ == "__main__":
    main()
