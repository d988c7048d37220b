"""Command-line entry points: train, sweep, ablate, landscape, evaluate, synth."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .checkpoint import load_checkpoint
from .data import LogFormat, filter_and_split, parse_log
from .experiment import (
    ExperimentSpec,
    SpecError,
    compare_methods,
    load_spec,
    run_experiment,
)
from .federation import METHODS, METHOD_FEDRECGEL, TrainConfig, component_rng
from .landscape import (
    DEFAULT_MAGNITUDES,
    evaluate_grid,
    magnitude_sweep,
    write_grid_csv,
    write_sweep_csv,
)
from .metrics import evaluate
from .reporting import (
    plot_landscape_heatmap,
    plot_magnitude_sweep,
    write_metrics_csv,
)
from .sam import NormRegConfig, SamConfig
from .synth import SynthSpec, filmtrust_scale_spec, generate_log, tiny_spec

# Flags below default to None so explicit values can override a --config file.
_TRAIN_FLAG_DEFAULTS = {
    "outdir": "runs",
    "method": METHOD_FEDRECGEL,
    "rounds": 100,
    "clients_per_round": 0,
    "local_epochs": 1,
    "batch_size": 256,
    "lr": 0.01,
    "dim": 32,
    "neg_per_pos": 4,
    "rho_co": 0.05,
    "rho_ur": 0.05,
    "sigma": 1.0,
    "big_n": 1,
    "sigma_policy": "fixed",
    "score_fn": "dot",
    "hidden": 16,
    "optimizer": "adam",
    "seeds": "0,1,2,3,4",
    "eval_every": 10,
    "eval_ks": "5,10",
    "workers": 1,
    "columns": "user,item,rating,timestamp",
    "delimiter": "tab",
    "min_interactions": 5,
}


def _add_data_args(p: argparse.ArgumentParser, require_data: bool = True) -> None:
    p.add_argument("--data", required=require_data, help="delimited interaction log")
    p.add_argument("--columns",
                   help="comma-separated column names (user,item[,rating][,timestamp][,skip])")
    p.add_argument("--delimiter", choices=["tab", "comma", "space"])
    p.add_argument("--min-interactions", type=int)


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment spec; explicit flags override it")
    p.add_argument("--outdir")
    p.add_argument("--method", choices=list(METHODS))
    p.add_argument("--rounds", type=int)
    p.add_argument("--clients-per-round", type=int, help="0 means all clients every round")
    p.add_argument("--local-epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--neg-per-pos", type=int)
    p.add_argument("--rho-co", type=float)
    p.add_argument("--rho-ur", type=float)
    p.add_argument("--normreg", action="store_true", help="enable the norm regularizer")
    p.add_argument("--sigma", type=float)
    p.add_argument("--big-n", type=int, help="training-set cardinality proxy; 1 = auto")
    p.add_argument("--sigma-policy", choices=["fixed", "from_rho"])
    p.add_argument("--score-fn", choices=["dot", "mlp1"])
    p.add_argument("--hidden", type=int)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--seeds", help="comma-separated run seeds")
    p.add_argument("--eval-every", type=int)
    p.add_argument("--eval-ks")
    p.add_argument("--workers", type=int)
    p.add_argument("--save-checkpoints", action="store_true")
    p.add_argument("--checkpoint-every", type=int,
                   help="also write a checkpoint every N rounds")
    p.add_argument("--no-figures", action="store_true")


def _parse_ints(raw: str) -> tuple[int, ...]:
    return tuple(int(x) for x in str(raw).split(",") if str(x).strip())


def _parse_floats(raw: str) -> tuple[float, ...]:
    return tuple(float(x) for x in str(raw).split(",") if str(x).strip())


def _flag(args: argparse.Namespace, name: str):
    value = getattr(args, name)
    return _TRAIN_FLAG_DEFAULTS[name] if value is None else value


def _spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    if args.config:
        spec = load_spec(args.config)
        return _apply_flag_overrides(spec, args)
    if not args.data:
        raise SpecError("--data is required unless --config is given")
    train = TrainConfig(
        rounds=_flag(args, "rounds"),
        clients_per_round=_flag(args, "clients_per_round") or None,
        local_epochs=_flag(args, "local_epochs"),
        batch_size=_flag(args, "batch_size"),
        lr=_flag(args, "lr"),
        embedding_dim=_flag(args, "dim"),
        negatives_per_positive=_flag(args, "neg_per_pos"),
        method=_flag(args, "method"),
        sam=SamConfig(rho_co=_flag(args, "rho_co"), rho_ur=_flag(args, "rho_ur")),
        normreg=NormRegConfig(
            enabled=args.normreg,
            sigma=_flag(args, "sigma"),
            big_n=_flag(args, "big_n"),
            sigma_policy=_flag(args, "sigma_policy"),
        ),
        score_variant=_flag(args, "score_fn"),
        hidden_units=_flag(args, "hidden"),
        optimizer=_flag(args, "optimizer"),
        workers=_flag(args, "workers"),
    )
    return ExperimentSpec(
        data_path=args.data,
        log_format=LogFormat.parse(_flag(args, "columns"), _flag(args, "delimiter")),
        train=train,
        eval_ks=_parse_ints(_flag(args, "eval_ks")),
        seeds=_parse_ints(_flag(args, "seeds")),
        outdir=_flag(args, "outdir"),
        eval_every=_flag(args, "eval_every"),
        min_interactions=_flag(args, "min_interactions"),
        save_checkpoints=args.save_checkpoints,
        checkpoint_every=args.checkpoint_every,
        figures=not args.no_figures,
    )


def _apply_flag_overrides(spec: ExperimentSpec, args: argparse.Namespace) -> ExperimentSpec:
    train = spec.train
    sam = train.sam
    normreg = train.normreg
    if args.rho_co is not None:
        sam = replace(sam, rho_co=args.rho_co)
    if args.rho_ur is not None:
        sam = replace(sam, rho_ur=args.rho_ur)
    if args.normreg:
        normreg = replace(normreg, enabled=True)
    if args.sigma is not None:
        normreg = replace(normreg, sigma=args.sigma)
    if args.big_n is not None:
        normreg = replace(normreg, big_n=args.big_n)
    if args.sigma_policy is not None:
        normreg = replace(normreg, sigma_policy=args.sigma_policy)
    updates = dict(
        rounds=args.rounds,
        clients_per_round=(args.clients_per_round or None) if args.clients_per_round is not None else train.clients_per_round,
        local_epochs=args.local_epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        embedding_dim=args.dim,
        negatives_per_positive=args.neg_per_pos,
        method=args.method,
        score_variant=args.score_fn,
        hidden_units=args.hidden,
        optimizer=args.optimizer,
        workers=args.workers,
    )
    train = replace(
        train,
        sam=sam,
        normreg=normreg,
        **{k: v for k, v in updates.items() if v is not None},
    )
    spec = replace(spec, train=train)
    if args.data:
        spec = replace(spec, data_path=args.data)
    if args.columns is not None or args.delimiter is not None:
        spec = replace(
            spec,
            log_format=LogFormat.parse(
                args.columns or ",".join(spec.log_format.columns),
                args.delimiter or spec.log_format.delimiter,
            ),
        )
    if args.outdir is not None:
        spec = replace(spec, outdir=args.outdir)
    if args.seeds is not None:
        spec = replace(spec, seeds=_parse_ints(args.seeds))
    if args.eval_every is not None:
        spec = replace(spec, eval_every=args.eval_every)
    if args.eval_ks is not None:
        spec = replace(spec, eval_ks=_parse_ints(args.eval_ks))
    if args.min_interactions is not None:
        spec = replace(spec, min_interactions=args.min_interactions)
    if args.save_checkpoints:
        spec = replace(spec, save_checkpoints=True)
    if args.checkpoint_every is not None:
        spec = replace(spec, checkpoint_every=args.checkpoint_every)
    if args.no_figures:
        spec = replace(spec, figures=False)
    return spec


def _load_split_for(args: argparse.Namespace, split_seed: int):
    fmt = LogFormat.parse(_flag(args, "columns"), _flag(args, "delimiter"))
    log = parse_log(args.data, fmt)
    return filter_and_split(log, _flag(args, "min_interactions"), split_seed)


def _print_summary(rows: list[dict]) -> None:
    for row in rows:
        print(
            f"{row['method']:<22} {row['param']}={row['value']:<8} "
            f"hr@10={row['hr@10_mean']:.4f}+/-{row['hr@10_std']:.4f} "
            f"ndcg@10={row['ndcg@10_mean']:.4f}+/-{row['ndcg@10_std']:.4f}"
        )


def cmd_train(args: argparse.Namespace) -> int:
    summary = run_experiment(_spec_from_args(args))
    _print_summary(summary)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    spec = replace(spec, sweep_param=args.sweep_param,
                   sweep_values=_parse_floats(args.sweep_values))
    summary = run_experiment(spec)
    _print_summary(summary)
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    base = _spec_from_args(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    specs = [replace(base, train=replace(base.train, method=m)) for m in methods]
    rows = compare_methods(specs)
    out = base.resolved_outdir()
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "comparison.csv", rows)
    for row in rows:
        print(
            f"{row['method']:<22} seed={row['seed']} "
            f"hr@10={float(row['hr@10']):.4f} ndcg@10={float(row['ndcg@10']):.4f}"
        )
    return 0


def cmd_landscape(args: argparse.Namespace) -> int:
    params, clients, _, meta = load_checkpoint(args.checkpoint)
    ds = _load_split_for(args, int(meta.get("split_seed", 0)))
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    npp = int(meta.get("negatives_per_positive", 4))
    grid = evaluate_grid(
        params, clients, ds,
        extent=args.extent, resolution=args.resolution,
        rng=component_rng(args.seed, "landscape"),
        negatives_per_positive=npp, max_clients=args.client_sample or None,
    )
    write_grid_csv(grid, out / "landscape_grid.csv")
    sweep = magnitude_sweep(
        params, clients, ds,
        magnitudes=_parse_floats(args.magnitudes), num_directions=args.directions,
        rng=component_rng(args.seed, "magnitude"),
        negatives_per_positive=npp, max_clients=args.client_sample or None,
    )
    write_sweep_csv(sweep, out / "magnitude_sweep.csv")
    if not args.no_figures:
        plot_landscape_heatmap(out / "landscape_grid.png", grid)
        plot_magnitude_sweep(out / "magnitude_sweep.png", {"model": sweep})
    print(f"unperturbed loss {sweep.unperturbed_loss:.6f}; wrote {out}/landscape_grid.csv")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    params, clients, _, meta = load_checkpoint(args.checkpoint)
    ds = _load_split_for(args, int(meta.get("split_seed", 0)))
    report = evaluate(params, clients, ds, _parse_ints(args.eval_ks or "5,10"))
    row = report.as_row(int(meta.get("rounds", 0)), str(meta.get("method", "?")),
                        int(meta.get("seed", 0)))
    if args.out:
        write_metrics_csv(args.out, [row])
    for k in report.ks:
        print(f"hr@{k}={report.hr[k]:.4f} ndcg@{k}={report.ndcg[k]:.4f}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    if args.preset == "filmtrust":
        spec = filmtrust_scale_spec(args.seed)
    elif args.preset == "tiny":
        spec = tiny_spec(args.seed)
    else:
        spec = SynthSpec(users=args.users, items=args.items,
                         interactions=args.interactions, seed=args.seed)
    stats = generate_log(args.out, spec)
    print(
        f"wrote {args.out}: {stats['raw_rows']} raw rows; after filtering expect "
        f"{stats['users']} users, {stats['items']} items, {stats['interactions']} interactions"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedrecsam",
        description="Federated recommendation trainer with hierarchical sharpness-aware minimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one method over the configured seeds")
    _add_data_args(p_train, require_data=False)
    _add_train_args(p_train)
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="grid-sweep one parameter")
    _add_data_args(p_sweep, require_data=False)
    _add_train_args(p_sweep)
    p_sweep.add_argument("--sweep-param", required=True)
    p_sweep.add_argument("--sweep-values", required=True, help="comma-separated values")
    p_sweep.set_defaults(func=cmd_sweep)

    p_ablate = sub.add_parser("ablate", help="paired comparison across methods")
    _add_data_args(p_ablate, require_data=False)
    _add_train_args(p_ablate)
    p_ablate.add_argument("--methods", default=",".join(METHODS),
                          help="comma-separated method list to compare")
    p_ablate.set_defaults(func=cmd_ablate)

    p_land = sub.add_parser("landscape", help="loss grid and magnitude sweep for a checkpoint")
    _add_data_args(p_land)
    p_land.add_argument("--checkpoint", required=True)
    p_land.add_argument("--outdir", default="landscape_out")
    p_land.add_argument("--extent", type=float, default=0.5)
    p_land.add_argument("--resolution", type=int, default=9)
    p_land.add_argument("--magnitudes", default=",".join(str(m) for m in DEFAULT_MAGNITUDES))
    p_land.add_argument("--directions", type=int, default=4)
    p_land.add_argument("--client-sample", type=int, default=200)
    p_land.add_argument("--seed", type=int, default=0)
    p_land.add_argument("--no-figures", action="store_true")
    p_land.set_defaults(func=cmd_landscape)

    p_eval = sub.add_parser("evaluate", help="rank the frozen candidates for a checkpoint")
    _add_data_args(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--eval-ks", default="5,10")
    p_eval.add_argument("--out", help="optional metrics CSV path")
    p_eval.set_defaults(func=cmd_evaluate)

    p_synth = sub.add_parser("synth", help="generate a synthetic benchmark log")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--preset", default="filmtrust", choices=["filmtrust", "tiny", "custom"])
    p_synth.add_argument("--users", type=int, default=1227)
    p_synth.add_argument("--items", type=int, default=2059)
    p_synth.add_argument("--interactions", type=int, default=34889)
    p_synth.add_argument("--seed", type=int, default=7)
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
