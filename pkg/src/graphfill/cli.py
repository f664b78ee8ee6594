"""Command-line entry points: run, train-filter, baseline, render-prompts, report."""
import argparse
import json
import sys

from .metrics import RunReport, format_aggregate, render_markdown_table
from .prompts import build_task, render_system_prompt, render_user_prompt
from .runner import RunConfig, execute_run, init_estimate, prepare_run, run_online
from .signals import observe, sample_mask
from .spectral import FilterDivergenceError, denoise, save_filter_json, train_filter


def _load_with_overrides(args) -> RunConfig:
    with open(args.config, encoding="utf-8") as fh:
        payload = json.load(fh)
    if getattr(args, "backend", None):
        payload.setdefault("predictor", {})["backend"] = args.backend
    if getattr(args, "seed", None) is not None:
        payload.setdefault("observation", {})["seed"] = args.seed
    if getattr(args, "ratio", None) is not None:
        payload.setdefault("observation", {})["ratio"] = args.ratio
    if getattr(args, "noise_variance", None) is not None:
        payload.setdefault("observation", {})["noise_variance"] = args.noise_variance
    if getattr(args, "t_split", None) is not None:
        payload["t_split"] = args.t_split
    if getattr(args, "repeats", None) is not None:
        payload["repeats"] = args.repeats
    if getattr(args, "precision", None) is not None:
        payload["precision"] = args.precision
    if getattr(args, "output_dir", None) is not None:
        payload["output_dir"] = args.output_dir
    if getattr(args, "transcript", False):
        payload["transcript"] = True
    if getattr(args, "baselines", None) is not None:
        payload["baselines"] = [b for b in args.baselines.split(",") if b]
    return RunConfig.from_dict(payload)


def _add_common_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--backend", choices=["mock", "remote"], help="override predictor backend")
    p.add_argument("--seed", type=int, help="override observation seed")
    p.add_argument("--ratio", type=float, help="override observation ratio")
    p.add_argument("--noise-variance", type=float, dest="noise_variance")
    p.add_argument("--t-split", type=int, dest="t_split")
    p.add_argument("--repeats", type=int)
    p.add_argument("--precision", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--transcript", action="store_true", help="log prompts and completions")
    p.add_argument("--baselines", help="comma-separated baseline names")


def _cmd_run(args) -> int:
    cfg = _load_with_overrides(args)
    report = run_online(cfg)
    for name, metrics in report.method_aggregates.items():
        print(
            f"{name}: RMSE {format_aggregate(metrics['rmse'])}  MAE {format_aggregate(metrics['mae'])}"
        )
    if cfg.output_dir:
        print(f"artifacts written to {cfg.output_dir}")
    return 0


def _cmd_train_filter(args) -> int:
    cfg = _load_with_overrides(args)
    ctx = prepare_run(cfg)
    model = sample_mask(
        ctx.graph.n_nodes, cfg.observation.ratio, cfg.observation.seed, cfg.observation.noise_variance
    )
    result = train_filter(ctx.basis, ctx.train_signal, model, cfg.train)
    save_filter_json(args.out, result, cfg.train)
    final = result.mae_trace[-1] if result.mae_trace.size else float("nan")
    print(f"trained {result.mae_trace.size} steps ({result.stop_reason}), final MAE {final:.6f}")
    print(f"filter written to {args.out}")
    return 0


def _cmd_baseline(args) -> int:
    cfg = _load_with_overrides(args)
    if not cfg.baselines:
        raise ValueError("no baselines selected (set 'baselines' in the config or --baselines)")
    execution = execute_run(cfg, with_primary=False)
    for name, metrics in execution.report.method_aggregates.items():
        print(
            f"{name}: RMSE {format_aggregate(metrics['rmse'])}  MAE {format_aggregate(metrics['mae'])}"
        )
    return 0


def _cmd_render_prompts(args) -> int:
    cfg = _load_with_overrides(args)
    ctx = prepare_run(cfg)
    model = sample_mask(
        ctx.graph.n_nodes, cfg.observation.ratio, cfg.observation.seed, cfg.observation.noise_variance
    )
    result = train_filter(ctx.basis, ctx.train_signal, model, cfg.train)
    x_prev = init_estimate(ctx.train_signal, model)
    t_abs = ctx.test_signal.t0
    obs = observe(ctx.test_signal.values[:, 0], model, t_abs)
    o_tilde = denoise(result.filter, ctx.basis, obs, x_prev)

    lines = [render_system_prompt()]
    for i in model.missing_indices:
        task = build_task(int(i), t_abs, float(x_prev[i]), o_tilde, ctx.graph, model, cfg.precision)
        lines.append(render_user_prompt([task]))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"prompts written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_report(args) -> int:
    reports = []
    for path in args.inputs:
        with open(path, encoding="utf-8") as fh:
            reports.append(RunReport.from_dict(json.load(fh)))
    text = render_markdown_table(reports, "rmse") + "\n" + render_markdown_table(reports, "mae")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"merged table written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphfill",
        description="Online graph-signal reconstruction with a spectral denoiser "
        "and a text-completion predictor for missing nodes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full online reconstruction run")
    _add_common_overrides(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_train = sub.add_parser("train-filter", help="train and export the spectral filter only")
    _add_common_overrides(p_train)
    p_train.add_argument("--out", default="filter.json", help="output filter JSON path")
    p_train.set_defaults(func=_cmd_train_filter)

    p_base = sub.add_parser("baseline", help="run the selected baselines only")
    _add_common_overrides(p_base)
    p_base.set_defaults(func=_cmd_baseline)

    p_render = sub.add_parser(
        "render-prompts", help="emit the first test step's prompts without any backend"
    )
    _add_common_overrides(p_render)
    p_render.add_argument("--out", help="output text file (default: stdout)")
    p_render.set_defaults(func=_cmd_render_prompts)

    p_report = sub.add_parser("report", help="merge run reports into markdown tables")
    p_report.add_argument("--inputs", nargs="+", required=True, help="report JSON files")
    p_report.add_argument("--out", help="output markdown path (default: stdout)")
    p_report.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, FilterDivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
