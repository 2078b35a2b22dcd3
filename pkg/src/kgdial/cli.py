"""Command-line entry point.

Subcommands run the batch pipeline stages over configured data and write
JSON reports; `serve` starts the HTTP service. Flags override config-file
values. Exit codes: 0 ok, 2 config error, 3 data error, 4 backend error,
5 internal error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import (
    SCORER_ROLES,
    PipelineConfig,
    config_from_mapping,
    load_pipeline_config,
    override,
)
from .errors import BackendError, ConfigError, DataError
from .runner import (
    prepare,
    run_detect,
    run_generate,
    run_pipeline,
    run_select,
    sweep_n,
    write_report,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BACKEND = 4
EXIT_INTERNAL = 5


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="pipeline config JSON file")
    parser.add_argument("--knowledge", type=Path, help="knowledge file (overrides config)")
    parser.add_argument("--database", type=Path, help="database file (overrides config)")
    parser.add_argument("--logs", type=Path, help="dialog logs file (overrides config)")
    parser.add_argument("--labels", type=Path, help="labels file (overrides config)")
    parser.add_argument(
        "--scorer",
        action="append",
        default=[],
        metavar="ROLE=BINDING",
        help=f"bind a scorer role ({', '.join(SCORER_ROLES)}) to 'lexical' or a base URL",
    )
    parser.add_argument("--generator", help="generator binding: 'template' or a base URL")
    parser.add_argument("--n-snippets", type=int, help="snippets passed to the generator")
    parser.add_argument("--ratio", type=float, help="ensemble confidence ratio threshold")
    parser.add_argument("--out", type=Path, help="output directory for reports")


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    if args.config:
        config = load_pipeline_config(args.config)
    else:
        raw = {}
        if args.knowledge:
            raw["knowledge"] = str(args.knowledge)
        if args.logs:
            raw["logs"] = str(args.logs)
        config = config_from_mapping(raw, base_dir=Path.cwd())

    updates: dict = {}
    for flag, key in (
        ("knowledge", "knowledge"),
        ("database", "database"),
        ("logs", "logs"),
        ("labels", "labels"),
    ):
        value = getattr(args, flag)
        if value is not None:
            updates[key] = value.resolve()
    if args.scorer:
        bindings = dict(config.scorers)
        for item in args.scorer:
            if "=" not in item:
                raise ConfigError(f"--scorer expects ROLE=BINDING, got {item!r}")
            role, binding = item.split("=", 1)
            bindings[role] = binding
        updates["scorers"] = bindings
    if args.generator is not None:
        updates["generator"] = args.generator
    if args.n_snippets is not None:
        updates["n_snippets"] = args.n_snippets
    if args.ratio is not None:
        updates["ensemble_ratio"] = args.ratio
    if args.out is not None:
        updates["out_dir"] = args.out.resolve()
    if getattr(args, "gating", None):
        updates["selection_gating"] = args.gating
    return override(config, **updates) if updates else config


def _cmd_detect(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    ctx = prepare(config)
    output = run_detect(ctx)
    path = write_report(
        config.out_dir / "detection.json",
        {"config": config.snapshot(), "detection": output.fragment},
    )
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_select(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    ctx = prepare(config)
    output = run_select(ctx)
    path = write_report(
        config.out_dir / "selection.json",
        {"config": config.snapshot(), "selection": output.fragment},
    )
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_generate(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    ctx = prepare(config)
    output = run_generate(ctx)
    path = write_report(
        config.out_dir / "generation.json",
        {"config": config.snapshot(), "generation": output.fragment},
    )
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_pipeline(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    ctx = prepare(config)
    report = run_pipeline(ctx)
    path = write_report(config.out_dir / "report.json", report)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_sweep_n(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    ctx = prepare(config)
    report = sweep_n(ctx, ns=tuple(range(1, args.max_n + 1)))
    path = write_report(config.out_dir / "sweep.json", report)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    config = _config_from_args(args)
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgdial",
        description="Knowledge-grounded dialog pipeline: detection, selection, generation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_detect = sub.add_parser("detect", help="run knowledge-seeking turn detection")
    _add_common_flags(p_detect)
    p_detect.set_defaults(func=_cmd_detect)

    p_select = sub.add_parser("select", help="run knowledge snippet selection")
    _add_common_flags(p_select)
    p_select.add_argument(
        "--gating",
        choices=("detection", "gold"),
        help="which turns to select for: detector output or gold labels",
    )
    p_select.set_defaults(func=_cmd_select)

    p_generate = sub.add_parser("generate", help="run response composition")
    _add_common_flags(p_generate)
    p_generate.add_argument("--gating", choices=("detection", "gold"))
    p_generate.set_defaults(func=_cmd_generate)

    p_pipeline = sub.add_parser("pipeline", help="run all three stages end to end")
    _add_common_flags(p_pipeline)
    p_pipeline.set_defaults(func=_cmd_pipeline)

    p_sweep = sub.add_parser("sweep-n", help="generation metrics for each snippet count")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--max-n", type=int, default=5)
    p_sweep.add_argument("--gating", choices=("detection", "gold"))
    p_sweep.set_defaults(func=_cmd_sweep_n)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    _add_common_flags(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
