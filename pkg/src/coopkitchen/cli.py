"""Command line entry points: run, serve, score, catalog."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .actions import AGENTS
from .backends import BackendConfig
from .runner import RunConfig, run_batch, score_traces
from .server import serve_sessions
from .tasks import catalog


def _load_backend_configs(path: str | None) -> dict[str, BackendConfig]:
    if path is None:
        return {agent: BackendConfig(kind="scripted_rat") for agent in AGENTS}
    doc = json.loads(Path(path).read_text())
    configs = {}
    for agent in AGENTS:
        if agent not in doc:
            raise SystemExit(f"backend config {path} is missing agent '{agent}'")
        configs[agent] = BackendConfig.from_dict(doc[agent])
    return configs


def _cmd_run(args: argparse.Namespace) -> int:
    backend_configs = _load_backend_configs(args.backend_config)
    gammas = args.gamma or [1.5]
    out_root = Path(args.out) if args.out else None
    for gamma in gammas:
        out_dir = None
        if out_root is not None:
            out_dir = out_root if len(gammas) == 1 else out_root / f"gamma_{gamma}"
        config = RunConfig(
            tasks=args.tasks,
            levels=args.levels,
            repetitions=args.reps,
            gamma=gamma,
            beta=args.beta,
            seed=args.seed,
            output_dir=str(out_dir) if out_dir else None,
            backend_configs=backend_configs,
            registry_dir=args.registry,
        )
        aggregate = run_batch(config)
        print(f"gamma={gamma}")
        for row in aggregate["levels"]:
            pc_text = "-" if row["pc"] is None else f"{100.0 * row['pc']:.2f}"
            print(
                f"  level {row['level']}: SR={row['sr']:.2f} PC={pc_text} "
                f"({row['episodes']} episodes)"
            )
        if out_dir is not None:
            print(f"  reports written to {out_dir}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    step_limit = None if args.step_limit in (None, 0) else args.step_limit
    server = serve_sessions(args.bind, args.registry, step_limit)
    host, port = server.server_address[:2]
    print(f"session service listening on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    result = score_traces(args.traces, args.registry)
    text = json.dumps(result, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    mismatches = 0
    for row in result["episodes"]:
        stored, recomputed = row["stored"], row["recomputed"]
        for key in ("sr", "pc", "ic", "rc"):
            a, b = stored.get(key), recomputed.get(key)
            if a is None and b is None:
                continue
            if a is None or b is None or abs(a - b) > 1e-9:
                mismatches += 1
                print(
                    f"MISMATCH {row['path']} {key}: stored={a} recomputed={b}",
                    file=sys.stderr,
                )
    return 1 if mismatches else 0


def _cmd_catalog(args: argparse.Namespace) -> int:
    tasks = catalog(args.registry)
    print(f"{'level':>5}  {'task':<38} {'min_t':>5} {'actions':>7} {'collab':>6}")
    for task in tasks:
        print(
            f"{task.level:>5}  {task.name:<38} {task.min_timesteps:>5} "
            f"{task.min_actions:>7} {task.min_collaborative_actions:>6}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coopkitchen",
        description="Two-agent kitchen collaboration benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a batch evaluation")
    run_p.add_argument("--tasks", nargs="+", help="task names to run")
    run_p.add_argument("--levels", nargs="+", type=int, help="levels to run")
    run_p.add_argument("--reps", type=int, default=10, help="repetitions per task")
    run_p.add_argument(
        "--gamma", nargs="+", type=float, help="time limit factor(s); default 1.5"
    )
    run_p.add_argument("--beta", type=float, default=0.95)
    run_p.add_argument("--backend-config", help="JSON file with per-agent backends")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--out", help="output directory for reports")
    run_p.add_argument("--registry", help="task registry directory")
    run_p.set_defaults(func=_cmd_run)

    serve_p = sub.add_parser("serve", help="start the live session service")
    serve_p.add_argument("--bind", default="127.0.0.1:8723")
    serve_p.add_argument(
        "--step-limit",
        type=int,
        default=0,
        choices=(0, 10, 15, 20),
        help="default per-step limit in seconds (0 = unlimited)",
    )
    serve_p.add_argument("--registry", help="task registry directory")
    serve_p.set_defaults(func=_cmd_serve)

    score_p = sub.add_parser("score", help="rescore stored episode traces")
    score_p.add_argument("traces", nargs="+", help="episode JSON files")
    score_p.add_argument("--out", help="write the metrics JSON here")
    score_p.add_argument("--registry", help="task registry directory")
    score_p.set_defaults(func=_cmd_score)

    catalog_p = sub.add_parser("catalog", help="list the task registry")
    catalog_p.add_argument("--registry", help="task registry directory")
    catalog_p.set_defaults(func=_cmd_catalog)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
