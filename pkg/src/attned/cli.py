"""Command-line pipeline: synth -> prep -> train -> evaluate -> explain.

Every command resolves its settings from an optional JSON config file
plus flag overrides, writes its artifacts under a workspace directory,
and records a ``manifest.json`` with the resolved config, seeds, input
fingerprints, and artifact hashes. ``attned replay`` re-runs a manifest
into a scratch directory and verifies the artifact hashes match.

Exit codes: 0 ok, 1 usage/config, 2 data, 3 numeric.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import explain as xp
from . import ingest, metrics, model as mdl, prep
from .errors import (
    AttnEdError,
    ConfigError,
    DataError,
    DimensionError,
    NumericError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

ENV_THREADS = "ATTN_ED_THREADS"

DEFAULT_CONFIG: dict = {
    "workspace": "attned-run",
    "synth": {},  # ingest.SynthConfig field overrides
    "prep": {
        "d_max_s": 600.0,
        "z_threshold": 3.0,
        "vif_threshold": 10.0,
        "window_len": 14,
        "horizon": 14,
    },
    "model": {"preset": "optimal-evotion"},
    "train": {"max_epochs": 500, "patience": 20, "seed": 0},
    "search": {"budget": 60, "epoch_cap": 100, "patience": 10, "seed": 0},
    "explain": {"background_size": 100, "n_samples": 2048, "max_windows": 200, "seed": 0},
    "benchmark": {"train_seeds": [0, 1, 2, 3, 4], "participant": None},
}


class CliUsageError(AttnEdError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise CliUsageError(message)


def _deep_merge(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(base[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def load_config(path: str | None) -> dict:
    if path is None:
        return json.loads(json.dumps(DEFAULT_CONFIG))
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path}: expected a JSON object")
    merged = dict(DEFAULT_CONFIG)
    # synth keys are validated by SynthConfig itself
    for key, value in raw.items():
        if key not in DEFAULT_CONFIG:
            raise ConfigError(f"unknown config key {key!r}")
        if key == "synth":
            merged["synth"] = value
        elif isinstance(DEFAULT_CONFIG[key], dict):
            merged[key] = _deep_merge(DEFAULT_CONFIG[key], value, key + ".")
        else:
            merged[key] = value
    return json.loads(json.dumps(merged))


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _threads() -> int:
    raw = os.environ.get(ENV_THREADS, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{ENV_THREADS} must be an integer, got {raw!r}") from None


def write_manifest(
    workspace: Path,
    command: str,
    config: dict,
    replay_args: dict,
    inputs: dict[str, Path],
    artifacts: dict[str, Path],
    logs: dict[str, Path] | None = None,
) -> Path:
    manifest = {
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "config": config,
        "replay_args": replay_args,
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in inputs.items()},
        "artifacts": {
            name: {"path": str(p), "sha256": _sha256(p)} for name, p in artifacts.items()
        },
        "logs": {name: str(p) for name, p in (logs or {}).items()},
    }
    path = workspace / "manifest.json"
    workspace.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise DataError(f"missing required artifact {path}; {hint}")
    return path


def _resolve_hp(config: dict, preset_flag: str | None) -> tuple[mdl.HyperParams, str | None]:
    section = config["model"]
    preset = preset_flag or section.get("preset")
    if section.get("hyperparams") and preset_flag is None:
        return mdl.HyperParams(**section["hyperparams"]), None
    if preset is None:
        preset = "optimal-evotion"
    if preset not in mdl.PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(mdl.PRESETS)}")
    return mdl.PRESETS[preset], preset


# ---------------------------------------------------------------------------
# commands


def cmd_synth(config: dict, out_csv: Path | None = None, seed: int | None = None) -> Path:
    workspace = Path(config["workspace"])
    synth_kwargs = dict(config["synth"])
    if seed is not None:
        synth_kwargs["seed"] = seed
    if "h_vol_range" in synth_kwargs:
        synth_kwargs["h_vol_range"] = tuple(synth_kwargs["h_vol_range"])
    try:
        synth_config = ingest.SynthConfig(**synth_kwargs)
    except TypeError as exc:
        raise ConfigError(f"synth config: {exc}") from None
    records = ingest.generate_synthetic(synth_config)
    report = ingest.validate_schema(records, h_vol_range=synth_config.h_vol_range)

    out = out_csv or workspace / "raw.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    ingest.write_log_csv(records, out)
    print(
        f"synth: wrote {report.n_records} records for "
        f"{len(report.records_per_participant)} participants to {out}"
    )
    write_manifest(
        workspace,
        "synth",
        config,
        {"out_csv": str(out), "seed": seed},
        {},
        {"raw_csv": out},
    )
    return out


def cmd_prep(config: dict, raw_csv: Path | None = None, out_dir: Path | None = None) -> Path:
    workspace = Path(config["workspace"])
    raw = _require(
        raw_csv or workspace / "raw.csv", "run `attned synth` first or pass --raw"
    )
    out = out_dir or workspace / "prepared"
    p = config["prep"]
    records = ingest.parse_log_csv(raw)
    result = prep.prepare(
        records,
        d_max_s=p["d_max_s"],
        z_threshold=p["z_threshold"],
        vif_threshold=p["vif_threshold"],
        window_len=p["window_len"],
        horizon=p["horizon"],
    )
    paths = prep.save_prepared_dir(result, out)
    n = len(result.dataset.samples)
    by_split = {
        split: len(result.dataset.split_samples(split)) for split in ("train", "val", "test")
    }
    print(
        f"prep: {len(result.daily)} participant-days -> {n} windows "
        f"(train {by_split['train']} / val {by_split['val']} / test {by_split['test']}), "
        f"{int(result.outlier_mask.sum())} outlier day(s) removed"
    )
    write_manifest(
        workspace,
        "prep",
        config,
        {"raw_csv": str(raw), "out_dir": str(out)},
        {"raw_csv": raw},
        paths,
    )
    return out


def cmd_train(
    config: dict,
    prep_dir: Path | None = None,
    kind: str = "attn_ed",
    preset: str | None = None,
    seed: int | None = None,
    search: bool = False,
    budget: int | None = None,
    out_ckpt: Path | None = None,
) -> Path:
    workspace = Path(config["workspace"])
    prep_path = _require(
        prep_dir or workspace / "prepared", "run `attned prep` first or pass --prep"
    )
    dataset = prep.load_prepared_dir(prep_path)
    t = config["train"]
    train_seed = t["seed"] if seed is None else seed

    train_samples = dataset.split_samples("train")
    val_samples = dataset.split_samples("val")

    preset_used: str | None
    if kind == "attn_ed":
        if search:
            s = config["search"]
            hp, trials = mdl.hyper_search(
                train_samples,
                val_samples,
                dataset.window_len,
                dataset.horizon,
                len(dataset.feature_names),
                budget=budget or s["budget"],
                seed=s["seed"],
                epoch_cap=s["epoch_cap"],
                patience=s["patience"],
                max_workers=_threads(),
                scaler=dataset.scaler,
                feature_names=dataset.feature_names,
            )
            preset_used = None
            trial_log = workspace / "models" / "search_trials.json"
            trial_log.parent.mkdir(parents=True, exist_ok=True)
            trial_log.write_text(
                json.dumps(
                    [
                        {
                            "index": tr.index,
                            "hyperparams": dataclasses.asdict(tr.hp),
                            "val_mse": tr.val_mse,
                            "epochs_ran": tr.epochs_ran,
                        }
                        for tr in trials
                    ],
                    indent=2,
                )
                + "\n"
            )
            print(f"search: best of {len(trials)} trials -> {hp}")
        else:
            hp, preset_used = _resolve_hp(config, preset)
        net = mdl.build_from_dataset(dataset, hp, kind=kind, seed=train_seed, preset=preset_used)
    elif kind == "vanilla_lstm":
        net = mdl.build_from_dataset(dataset, None, kind=kind, seed=train_seed)
    else:
        raise ConfigError(f"unknown model kind {kind!r}")

    report = mdl.train(
        net,
        train_samples,
        val_samples,
        max_epochs=t["max_epochs"],
        patience=t["patience"],
        seed=train_seed,
    )

    models_dir = workspace / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_ckpt or models_dir / f"{kind}_seed{train_seed}.ckpt"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    mdl.save_checkpoint(net, ckpt)
    log_path = ckpt.with_suffix(".log.csv")
    report.write_csv(log_path)
    print(
        f"train[{kind}]: {len(report.val_losses)} epoch(s), best epoch {report.best_epoch} "
        f"(val mse {report.best_val_loss:.6g}), "
        f"{'stopped early' if report.stopped_early else 'ran to cap'}, "
        f"{report.wall_time_s:.1f}s -> {ckpt}"
    )
    write_manifest(
        workspace,
        "train",
        config,
        {
            "prep_dir": str(prep_path),
            "kind": kind,
            "preset": preset,
            "seed": train_seed,
            "search": search,
            "budget": budget,
            "out_ckpt": str(ckpt),
        },
        {"windows": prep_path / "windows.bin"},
        {"checkpoint": ckpt},
        {"training_log": log_path},
    )
    return ckpt


def cmd_evaluate(
    config: dict,
    prep_dir: Path | None = None,
    attn_ckpt: Path | None = None,
    vanilla_ckpt: Path | None = None,
    participant: int | None = None,
    out_csv: Path | None = None,
) -> Path:
    workspace = Path(config["workspace"])
    prep_path = _require(
        prep_dir or workspace / "prepared", "run `attned prep` first or pass --prep"
    )
    dataset = prep.load_prepared_dir(prep_path)
    test_samples = dataset.split_samples("test")

    seed = config["train"]["seed"]
    attn_path = _require(
        attn_ckpt or workspace / "models" / f"attn_ed_seed{seed}.ckpt",
        "train the attn_ed model first or pass --attn",
    )
    vanilla_path = _require(
        vanilla_ckpt or workspace / "models" / f"vanilla_lstm_seed{seed}.ckpt",
        "train the vanilla_lstm model first or pass --vanilla",
    )
    models = [mdl.load_checkpoint(attn_path), mdl.load_checkpoint(vanilla_path)]

    results: list[metrics.EvalResult] = []
    for net in models:
        results.append(metrics.evaluate(net, test_samples))
    if participant is not None:
        for net in models:
            results.append(metrics.evaluate(net, test_samples, participant_id=participant))

    out = out_csv or workspace / "eval" / "metrics.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    metrics.write_metrics_csv(results, out)
    for res in results:
        print(
            f"evaluate[{res.model_kind}/{res.scope}"
            + (f":{res.participant_id}" if res.participant_id is not None else "")
            + f"]: smape {res.smape:.4f}, mape "
            + (f"{res.mape:.4f}" if not np.isnan(res.mape) else "nan")
            + f", wape {res.wape:.4f} over {res.n_points} points"
        )
    write_manifest(
        workspace,
        "evaluate",
        config,
        {
            "prep_dir": str(prep_path),
            "attn_ckpt": str(attn_path),
            "vanilla_ckpt": str(vanilla_path),
            "participant": participant,
            "out_csv": str(out),
        },
        {"windows": prep_path / "windows.bin", "attn": attn_path, "vanilla": vanilla_path},
        {"metrics": out},
    )
    return out


def cmd_explain(
    config: dict,
    prep_dir: Path | None = None,
    ckpt: Path | None = None,
    participant: int | None = None,
    out_dir: Path | None = None,
) -> Path:
    workspace = Path(config["workspace"])
    prep_path = _require(
        prep_dir or workspace / "prepared", "run `attned prep` first or pass --prep"
    )
    dataset = prep.load_prepared_dir(prep_path)
    seed_default = config["train"]["seed"]
    ckpt_path = _require(
        ckpt or workspace / "models" / f"attn_ed_seed{seed_default}.ckpt",
        "train the attn_ed model first or pass --model",
    )
    net = mdl.load_checkpoint(ckpt_path)

    e = config["explain"]
    test_samples = dataset.split_samples("test")
    if participant is not None:
        test_samples = [s for s in test_samples if s.participant_id == participant]
        if not test_samples:
            raise DataError(f"participant {participant} has no test windows")
    rng = np.random.default_rng([e["seed"], 0x5A])
    if len(test_samples) > e["max_windows"]:
        idx = sorted(rng.choice(len(test_samples), size=e["max_windows"], replace=False))
        test_samples = [test_samples[i] for i in idx]

    background = xp.sample_background(dataset, e["background_size"], e["seed"])
    fingerprint = xp.background_fingerprint(background)
    explanations = [
        xp.explain_forecast(net, s, background, n_samples=e["n_samples"], seed=e["seed"])
        for s in test_samples
    ]

    out = out_dir or workspace / "explain"
    out.mkdir(parents=True, exist_ok=True)
    tag = "global" if participant is None else f"p{participant}"
    json_path = out / f"explain_{tag}.json"
    xp.write_explanations_json(explanations, json_path, e["seed"], fingerprint)
    svg_path, csv_path = xp.emit_summary_plot(
        explanations,
        out / f"summary_{tag}.svg",
        out / f"summary_{tag}.csv",
        title=(
            "Global feature attribution"
            if participant is None
            else f"Personalized feature attribution (participant {participant})"
        ),
    )
    ranking = xp.global_aggregate(explanations).ranked_names()
    print(
        f"explain[{tag}]: {len(explanations)} window(s), exact={explanations[0].exact}, "
        f"top features: {', '.join(ranking[:3])}"
    )
    write_manifest(
        workspace,
        "explain",
        config,
        {
            "prep_dir": str(prep_path),
            "ckpt": str(ckpt_path),
            "participant": participant,
            "out_dir": str(out),
        },
        {"windows": prep_path / "windows.bin", "checkpoint": ckpt_path},
        {"explanations": json_path, "summary_svg": svg_path, "summary_csv": csv_path},
    )
    return json_path


def cmd_benchmark(
    config: dict,
    out_dir: Path | None = None,
    seeds: Sequence[int] | None = None,
    participant: int | None = None,
    run_explain: bool = True,
) -> Path:
    """Full comparison protocol: synth, prep, then per training seed train
    both models, evaluate globally (and per participant when given), and
    explain the attn-ED forecasts."""
    workspace = Path(config["workspace"]) if out_dir is None else out_dir
    config = dict(config)
    config["workspace"] = str(workspace)
    b = config["benchmark"]
    seeds = list(seeds) if seeds is not None else list(b["train_seeds"])
    participant = participant if participant is not None else b["participant"]

    raw = cmd_synth(config)
    prep_dir = cmd_prep(config, raw)
    dataset = prep.load_prepared_dir(prep_dir)
    test_samples = dataset.split_samples("test")

    eval_dir = workspace / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    combined = eval_dir / "metrics.csv"
    combined.unlink(missing_ok=True)

    artifacts: dict[str, Path] = {}
    hp, preset_used = _resolve_hp(config, None)
    for seed in seeds:
        attn = mdl.build_from_dataset(dataset, hp, kind="attn_ed", seed=seed, preset=preset_used)
        vanilla = mdl.build_from_dataset(dataset, None, kind="vanilla_lstm", seed=seed)
        t = config["train"]
        for net in (attn, vanilla):
            report = mdl.train(
                net,
                dataset.split_samples("train"),
                dataset.split_samples("val"),
                max_epochs=t["max_epochs"],
                patience=t["patience"],
                seed=seed,
            )
            ckpt = workspace / "models" / f"{net.kind}_seed{seed}.ckpt"
            ckpt.parent.mkdir(parents=True, exist_ok=True)
            mdl.save_checkpoint(net, ckpt)
            report.write_csv(ckpt.with_suffix(".log.csv"))
            artifacts[f"{net.kind}_seed{seed}"] = ckpt
            print(
                f"benchmark[seed {seed}] trained {net.kind}: "
                f"best val mse {report.best_val_loss:.6g} at epoch {report.best_epoch}"
            )

        results = [metrics.evaluate(attn, test_samples), metrics.evaluate(vanilla, test_samples)]
        if participant is not None:
            results += [
                metrics.evaluate(attn, test_samples, participant_id=participant),
                metrics.evaluate(vanilla, test_samples, participant_id=participant),
            ]
        metrics.append_metrics_csv(results, combined, {"seed": seed})
        for res in results:
            print(
                f"benchmark[seed {seed}] {res.model_kind}/{res.scope}: "
                f"wape {res.wape:.4f}, smape {res.smape:.4f}"
            )

        if run_explain:
            cfg_seeded = json.loads(json.dumps(config))
            cfg_seeded["train"]["seed"] = seed
            explain_json = cmd_explain(
                cfg_seeded,
                prep_dir,
                workspace / "models" / f"attn_ed_seed{seed}.ckpt",
                None,
                workspace / "explain" / f"seed{seed}",
            )
            artifacts[f"explain_global_seed{seed}"] = explain_json
            if participant is not None:
                explain_personal = cmd_explain(
                    cfg_seeded,
                    prep_dir,
                    workspace / "models" / f"attn_ed_seed{seed}.ckpt",
                    participant,
                    workspace / "explain" / f"seed{seed}",
                )
                artifacts[f"explain_p{participant}_seed{seed}"] = explain_personal

    artifacts["metrics"] = combined
    write_manifest(
        workspace,
        "benchmark",
        config,
        {
            "out_dir": str(workspace),
            "seeds": list(seeds),
            "participant": participant,
            "run_explain": run_explain,
        },
        {"raw_csv": raw},
        artifacts,
    )
    print(f"benchmark: combined metrics at {combined}")
    return combined


_REPLAYABLE = {
    "synth": lambda cfg, args: cmd_synth(
        cfg, Path(args["out_csv"]), args.get("seed")
    ),
    "prep": lambda cfg, args: cmd_prep(cfg, Path(args["raw_csv"]), Path(args["out_dir"])),
    "train": lambda cfg, args: cmd_train(
        cfg,
        Path(args["prep_dir"]),
        args["kind"],
        args.get("preset"),
        args.get("seed"),
        args.get("search", False),
        args.get("budget"),
        Path(args["out_ckpt"]),
    ),
    "evaluate": lambda cfg, args: cmd_evaluate(
        cfg,
        Path(args["prep_dir"]),
        Path(args["attn_ckpt"]),
        Path(args["vanilla_ckpt"]),
        args.get("participant"),
        Path(args["out_csv"]),
    ),
    "explain": lambda cfg, args: cmd_explain(
        cfg,
        Path(args["prep_dir"]),
        Path(args["ckpt"]),
        args.get("participant"),
        Path(args["out_dir"]),
    ),
}


def cmd_replay(manifest_path: Path, scratch: Path | None = None) -> bool:
    """Re-run a recorded command into a scratch workspace and compare
    artifact hashes. Returns True when every hash matches."""
    manifest = json.loads(Path(manifest_path).read_text())
    command = manifest["command"]
    if command not in _REPLAYABLE:
        raise ConfigError(f"command {command!r} cannot be replayed")
    config = manifest["config"]
    args = dict(manifest["replay_args"])

    with tempfile.TemporaryDirectory() as tmp:
        scratch_dir = scratch or Path(tmp)
        old_workspace = Path(config["workspace"])
        config = json.loads(json.dumps(config))
        config["workspace"] = str(scratch_dir)

        def relocate(value: str) -> str:
            p = Path(value)
            try:
                return str(scratch_dir / p.relative_to(old_workspace))
            except ValueError:
                return value

        for key in ("out_csv", "out_dir", "out_ckpt"):
            if key in args and args[key]:
                args[key] = relocate(args[key])
        _REPLAYABLE[command](config, args)

        ok = True
        for name, entry in manifest["artifacts"].items():
            new_path = Path(relocate(entry["path"]))
            if not new_path.exists():
                print(f"replay: artifact {name} missing at {new_path}")
                ok = False
                continue
            new_hash = _sha256(new_path)
            match = new_hash == entry["sha256"]
            ok = ok and match
            print(f"replay: {name}: {'match' if match else 'MISMATCH'}")
        return ok


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> _Parser:
    parser = _Parser(prog="attned", description="Daily usage forecasting pipeline")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add_common(p: _Parser) -> None:
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output path/directory override")

    p = sub.add_parser("synth", help="generate a synthetic raw minute-log CSV")
    add_common(p)
    p.add_argument("--seed", type=int, help="generator seed override")

    p = sub.add_parser("prep", help="preprocess a raw CSV into a prepared dataset")
    add_common(p)
    p.add_argument("--raw", help="raw CSV path (default: workspace/raw.csv)")

    p = sub.add_parser("train", help="train a model on a prepared dataset")
    add_common(p)
    p.add_argument("--prep", help="prepared dataset directory")
    p.add_argument(
        "--model", choices=["attn_ed", "vanilla_lstm"], default="attn_ed", dest="kind"
    )
    p.add_argument("--preset", help="named hyperparameter preset (e.g. optimal-evotion)")
    p.add_argument("--seed", type=int, help="training seed override")
    p.add_argument("--search", action="store_true", help="random-search hyperparameters first")
    p.add_argument("--budget", type=int, help="search trial budget")

    p = sub.add_parser("evaluate", help="compare attn-ED and the baseline on the test split")
    add_common(p)
    p.add_argument("--prep", help="prepared dataset directory")
    p.add_argument("--attn", help="attn-ED checkpoint path")
    p.add_argument("--vanilla", help="baseline checkpoint path")
    p.add_argument("--participant", type=int, help="also evaluate this participant alone")

    p = sub.add_parser("explain", help="attribute forecasts to input features")
    add_common(p)
    p.add_argument("--prep", help="prepared dataset directory")
    p.add_argument("--model", dest="ckpt", help="attn-ED checkpoint path")
    p.add_argument("--participant", type=int, help="explain this participant only")

    p = sub.add_parser("benchmark", help="end-to-end multi-seed comparison run")
    add_common(p)
    p.add_argument("--seeds", help="comma-separated training seeds (e.g. 0,1,2,3,4)")
    p.add_argument("--participant", type=int, help="personalized scope participant")
    p.add_argument(
        "--skip-explain", action="store_true", help="skip the attribution stage"
    )

    p = sub.add_parser("replay", help="re-run a manifest and verify artifact hashes")
    p.add_argument("manifest", help="path to a manifest.json")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_USAGE
        if args.command == "replay":
            return EXIT_OK if cmd_replay(Path(args.manifest)) else EXIT_DATA

        config = load_config(args.config)
        out = Path(args.out) if args.out else None
        if args.command == "synth":
            cmd_synth(config, out, args.seed)
        elif args.command == "prep":
            cmd_prep(config, Path(args.raw) if args.raw else None, out)
        elif args.command == "train":
            cmd_train(
                config,
                Path(args.prep) if args.prep else None,
                args.kind,
                args.preset,
                args.seed,
                args.search,
                args.budget,
                out,
            )
        elif args.command == "evaluate":
            cmd_evaluate(
                config,
                Path(args.prep) if args.prep else None,
                Path(args.attn) if args.attn else None,
                Path(args.vanilla) if args.vanilla else None,
                args.participant,
                out,
            )
        elif args.command == "explain":
            cmd_explain(
                config,
                Path(args.prep) if args.prep else None,
                Path(args.ckpt) if args.ckpt else None,
                args.participant,
                out,
            )
        elif args.command == "benchmark":
            seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
            cmd_benchmark(config, out, seeds, args.participant, not args.skip_explain)
        else:  # pragma: no cover - argparse restricts choices
            raise CliUsageError(f"unknown command {args.command!r}")
        return EXIT_OK
    except (CliUsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, DimensionError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
