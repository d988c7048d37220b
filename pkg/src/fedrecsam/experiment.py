"""Experiment orchestration: single runs, seed repeats, sweeps, method batteries."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .checkpoint import save_checkpoint
from .data import InteractionLog, LogFormat, filter_and_split, parse_log
from .federation import (
    METHODS,
    TrainConfig,
    TrainResult,
    component_seed,
    run_training,
)
from .metrics import EvalReport, evaluate
from .reporting import (
    SUMMARY_HEADER,
    plot_learning_curve,
    plot_summary,
    write_metrics_csv,
    write_ranks_csv,
    write_rounds_csv,
)
from .sam import NormRegConfig, SamConfig

OUTPUT_ROOT_ENV = "FEDRECSAM_OUTPUT_ROOT"

SWEEPABLE = ("rho_co", "rho_ur", "lr", "batch_size", "clients_per_round", "sigma")


class SpecError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    data_path: str
    log_format: LogFormat = field(default_factory=LogFormat)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval_ks: tuple[int, ...] = (5, 10)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    sweep_param: str | None = None
    sweep_values: tuple[float, ...] = ()
    outdir: str = "runs"
    eval_every: int = 10
    min_interactions: int = 5
    save_checkpoints: bool = False
    checkpoint_every: int | None = None
    figures: bool = True

    def validate(self) -> None:
        if not self.seeds:
            raise SpecError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise SpecError("seeds must be distinct")
        if self.sweep_param is not None:
            if self.sweep_param not in SWEEPABLE:
                raise SpecError(f"cannot sweep {self.sweep_param!r}; choose from {SWEEPABLE}")
            if not self.sweep_values:
                raise SpecError("sweep_values must be nonempty when sweep_param is set")
        if self.eval_every < 1:
            raise SpecError("eval_every must be at least 1")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise SpecError("checkpoint_every must be at least 1")
        self.train.validate()

    def resolved_outdir(self) -> Path:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        out = Path(self.outdir)
        if root and not out.is_absolute():
            return Path(root) / out
        return out


def apply_sweep_value(cfg: TrainConfig, param: str, value: float) -> TrainConfig:
    if param == "rho_co":
        return replace(cfg, sam=replace(cfg.sam, rho_co=float(value)))
    if param == "rho_ur":
        return replace(cfg, sam=replace(cfg.sam, rho_ur=float(value)))
    if param == "sigma":
        return replace(cfg, normreg=replace(cfg.normreg, sigma=float(value)))
    if param == "lr":
        return replace(cfg, lr=float(value))
    if param == "batch_size":
        return replace(cfg, batch_size=int(value))
    if param == "clients_per_round":
        return replace(cfg, clients_per_round=int(value))
    raise SpecError(f"cannot sweep {param!r}")


def spec_to_dict(spec: ExperimentSpec) -> dict:
    out = asdict(spec)
    out["log_format"] = {"columns": list(spec.log_format.columns), "delimiter": spec.log_format.delimiter}
    out["train"]["sam"] = asdict(spec.train.sam)
    out["train"]["normreg"] = asdict(spec.train.normreg)
    out["eval_ks"] = list(spec.eval_ks)
    out["seeds"] = list(spec.seeds)
    out["sweep_values"] = list(spec.sweep_values)
    return out


def spec_from_dict(raw: dict) -> ExperimentSpec:
    raw = dict(raw)
    fmt_raw = raw.pop("log_format", {})
    fmt = LogFormat(tuple(fmt_raw.get("columns", ("user", "item", "rating", "timestamp"))),
                    fmt_raw.get("delimiter", "tab"))
    train_raw = dict(raw.pop("train", {}))
    sam = SamConfig(**train_raw.pop("sam", {}))
    normreg = NormRegConfig(**train_raw.pop("normreg", {}))
    train = TrainConfig(sam=sam, normreg=normreg, **train_raw)
    spec = ExperimentSpec(
        data_path=raw.pop("data_path"),
        log_format=fmt,
        train=train,
        eval_ks=tuple(raw.pop("eval_ks", (5, 10))),
        seeds=tuple(raw.pop("seeds", (0, 1, 2, 3, 4))),
        sweep_param=raw.pop("sweep_param", None),
        sweep_values=tuple(raw.pop("sweep_values", ())),
        outdir=raw.pop("outdir", "runs"),
        eval_every=raw.pop("eval_every", 10),
        min_interactions=raw.pop("min_interactions", 5),
        save_checkpoints=raw.pop("save_checkpoints", False),
        checkpoint_every=raw.pop("checkpoint_every", None),
        figures=raw.pop("figures", True),
    )
    if raw:
        raise SpecError(f"unknown spec fields: {sorted(raw)}")
    return spec


def load_spec(path: str | Path) -> ExperimentSpec:
    with Path(path).open("r", encoding="utf-8") as f:
        return spec_from_dict(yaml.safe_load(f))


def save_spec(spec: ExperimentSpec, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        yaml.safe_dump(spec_to_dict(spec), f, sort_keys=True)


def sweep_value_dirname(value: float | None) -> str:
    return "default" if value is None else f"{value:g}"


@dataclass
class RunOutput:
    method: str
    sweep_value: float | None
    seed: int
    final: EvalReport
    metrics_rows: list[dict]
    run_dir: Path
    result: TrainResult


def run_single(
    spec: ExperimentSpec,
    log: InteractionLog,
    method: str,
    sweep_value: float | None,
    seed: int,
) -> RunOutput:
    """Split, train, evaluate at the configured cadence, and write one run directory."""
    cfg = replace(spec.train, method=method, seed=seed)
    if spec.sweep_param is not None and sweep_value is not None:
        cfg = apply_sweep_value(cfg, spec.sweep_param, sweep_value)
    split_seed = component_seed(seed, "split")
    ds = filter_and_split(log, spec.min_interactions, split_seed)

    run_dir = spec.resolved_outdir() / method / sweep_value_dirname(sweep_value) / str(seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_meta = {
        "method": method,
        "seed": seed,
        "rounds": cfg.rounds,
        "negatives_per_positive": cfg.negatives_per_positive,
        "split_seed": split_seed,
        "min_interactions": spec.min_interactions,
        "data_path": str(spec.data_path),
    }

    rows: list[dict] = []

    def hook(t: int, params, clients, server_opt) -> None:
        if t % spec.eval_every == 0 or t == cfg.rounds:
            report = evaluate(params, clients, ds, spec.eval_ks)
            rows.append(report.as_row(t, method, seed))
        if spec.checkpoint_every and t % spec.checkpoint_every == 0 and t != cfg.rounds:
            save_checkpoint(run_dir / f"checkpoint_round{t:04d}.npz",
                            params, clients, server_opt, dict(checkpoint_meta, round=t))

    result = run_training(ds, cfg, round_hook=hook)
    final = evaluate(result.global_params, result.clients, ds, spec.eval_ks)
    if not rows:
        rows.append(final.as_row(cfg.rounds, method, seed))
    write_metrics_csv(run_dir / "metrics.csv", rows)
    write_metrics_csv(run_dir / "final.csv", [rows[-1]])
    write_ranks_csv(run_dir / "ranks.csv", final.ranks)
    write_rounds_csv(run_dir / "rounds.csv", result.rounds)
    echo = replace(
        spec,
        train=result.config,
        seeds=(seed,),
        sweep_param=None,
        sweep_values=(),
    )
    save_spec(echo, run_dir / "config.yaml")
    if spec.save_checkpoints or spec.checkpoint_every:
        save_checkpoint(run_dir / "checkpoint.npz", result.global_params, result.clients,
                        result.server_opt, checkpoint_meta)
    if spec.figures:
        plot_learning_curve(run_dir / "learning_curve.png", rows, spec.eval_ks)
    return RunOutput(method, sweep_value, seed, final, rows, run_dir, result)


def summarize_runs(outputs: list[RunOutput], sweep_param: str | None) -> list[dict]:
    """One summary row per (method, sweep value): mean and std over seeds."""
    groups: dict[tuple[str, float | None], list[RunOutput]] = {}
    for out in outputs:
        groups.setdefault((out.method, out.sweep_value), []).append(out)
    rows = []
    for (method, value), outs in sorted(groups.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
        row: dict[str, object] = {
            "method": method,
            "param": sweep_param or "",
            "value": sweep_value_dirname(value),
        }
        for k in (5, 10):
            hrs = np.array([o.final.hr[k] for o in outs])
            ndcgs = np.array([o.final.ndcg[k] for o in outs])
            ddof = 1 if hrs.size > 1 else 0
            row[f"hr@{k}_mean"] = float(hrs.mean())
            row[f"hr@{k}_std"] = float(hrs.std(ddof=ddof))
            row[f"ndcg@{k}_mean"] = float(ndcgs.mean())
            row[f"ndcg@{k}_std"] = float(ndcgs.std(ddof=ddof))
        rows.append(row)
    return rows


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """Run (sweep value x seed) grid, write per-run artifacts and the summary table."""
    spec.validate()
    log = parse_log(spec.data_path, spec.log_format)
    values: list[float | None] = list(spec.sweep_values) if spec.sweep_param else [None]
    outputs = [
        run_single(spec, log, spec.train.method, value, seed)
        for value in values
        for seed in spec.seeds
    ]
    summary = summarize_runs(outputs, spec.sweep_param)
    outdir = spec.resolved_outdir()
    outdir.mkdir(parents=True, exist_ok=True)
    from .reporting import write_rows_csv

    write_rows_csv(outdir / "summary.csv", SUMMARY_HEADER, summary)
    save_spec(spec, outdir / "experiment.yaml")
    if spec.figures and summary:
        plot_summary(outdir / "summary_hr10.png", summary, "hr@10")
        plot_summary(outdir / "summary_ndcg10.png", summary, "ndcg@10")
    return summary


def compare_methods(specs: list[ExperimentSpec]) -> list[dict]:
    """Paired per-seed comparison across specs that differ only in training method."""
    if not specs:
        raise SpecError("no specs to compare")
    methods = [s.train.method for s in specs]
    if len(set(methods)) != len(methods):
        raise SpecError(f"duplicate methods in comparison: {methods}")

    def comparable(s: ExperimentSpec) -> dict:
        d = spec_to_dict(s)
        d["train"].pop("method")
        d.pop("outdir")
        return d

    reference = comparable(specs[0])
    for s in specs[1:]:
        other = comparable(s)
        if other != reference:
            diffs = _dict_diff(reference, other)
            raise SpecError(f"specs differ beyond method: {sorted(diffs)}")

    rows: list[dict] = []
    for s in specs:
        s.validate()
        log = parse_log(s.data_path, s.log_format)
        for seed in s.seeds:
            out = run_single(s, log, s.train.method, None, seed)
            rows.append(out.final.as_row(s.train.rounds, s.train.method, seed))
    return rows


def _dict_diff(a: dict, b: dict, prefix: str = "") -> list[str]:
    keys = set(a) | set(b)
    out = []
    for key in keys:
        label = f"{prefix}{key}"
        if isinstance(a.get(key), dict) and isinstance(b.get(key), dict):
            out.extend(_dict_diff(a[key], b[key], label + "."))
        elif a.get(key) != b.get(key):
            out.append(label)
    return out
