"""Command-line entry point: local benchmark runs plus a thin client for the HTTP service."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from .bench import (
    ConfigError,
    RunConfig,
    VerifyError,
    parse_config_text,
    run,
    save,
    sweep,
    write_csv,
    write_summary,
)

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG = 0, 1, 2

_RUN_FLAGS = {
    "graph": str, "partition": str, "distribution": str, "objects": int, "movers": float,
    "dt": int, "speed_min": int, "speed_max": int, "m": int, "z": int, "mu": int, "k": int,
    "queries": int, "rounds": int, "runs": int, "seed": int, "workers": int, "output": str,
}


class _ConfigArgParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; flags override it")
    for name, kind in _RUN_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=None)
    p.add_argument("--verify", action="store_true", default=None, help="check every answer against network expansion")
    p.add_argument("--serial", action="store_true", default=None, help="single-threaded, deterministic")
    p.add_argument("--sticky", action="store_true", default=None, help="same movers every epoch")
    p.add_argument("--dry-run", action="store_true", help="echo the resolved config and exit")


def _resolve(args: argparse.Namespace, base: RunConfig) -> RunConfig:
    values: dict[str, object] = {}
    if args.config:
        try:
            values.update(parse_config_text(Path(args.config).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    cfg = replace(base, **values)
    cfg.validate()
    return cfg


def _cmd_run(args) -> int:
    cfg = _resolve(args, RunConfig())
    print(cfg.echo())
    if args.dry_run:
        return EXIT_OK
    try:
        result = run(cfg, progress=lambda m: logging.info(m))
    except VerifyError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        print(exc.dump, file=sys.stderr, end="")
        return EXIT_VERIFY
    if cfg.output:
        save(result, cfg.output)
    else:
        write_csv(result, sys.stdout)
    s = result.summary()
    print(f"summary: rows={s['rows']} mean_init_us={_f(s['mean_init_us'])}"
          + (f" mean_inc_us={_f(s['mean_inc_us'])}" if s["mean_inc_us"] is not None else "")
          + f" folds={s['folds']} unfolds={s['unfolds']}", file=sys.stderr)
    return EXIT_OK


def _f(x) -> str:
    return "-" if x is None else f"{x:.1f}"


def _cmd_sweep(args) -> int:
    cfg = _resolve(args, RunConfig(runs=3))
    print(cfg.echo() + f" axis={args.axis}")
    values = [v for v in args.values.split(",") if v]
    if args.dry_run:
        return EXIT_OK
    try:
        points = sweep(cfg, args.axis, values, progress=lambda m: logging.info(m))
    except VerifyError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        print(exc.dump, file=sys.stderr, end="")
        return EXIT_VERIFY
    if cfg.output:
        out = Path(cfg.output)
        for p in points:
            save(p.result, out.with_name(f"{out.stem}.{args.axis}={p.value.replace(':', '-')}{out.suffix or '.csv'}"))
        with out.open("w", newline="") as fh:
            write_summary(points, fh)
    write_summary(points, sys.stdout)
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("odin.service:app", host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def _client(args):
    import httpx

    return httpx.Client(base_url=args.url, timeout=args.timeout)


def _emit(resp) -> int:
    if resp.status_code >= 400:
        print(resp.text, file=sys.stderr)
        return EXIT_CONFIG
    if resp.status_code != 204:
        ctype = resp.headers.get("content-type", "")
        print(json.dumps(resp.json(), indent=2) if "json" in ctype else resp.text, end="" if "json" not in ctype else "\n")
    return EXIT_OK


def _cmd_session(args) -> int:
    import httpx

    try:
        return _session_request(args)
    except httpx.HTTPError as exc:
        print(f"service unreachable: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _session_request(args) -> int:
    with _client(args) as c:
        if args.action == "create":
            body = {k: v for k, v in {
                "graph": args.graph, "objects": args.objects, "distribution": args.distribution,
                "movers": args.movers, "m": args.m, "z": args.z, "mu": args.mu, "seed": args.seed,
            }.items() if v is not None}
            return _emit(c.post("/sessions", json=body))
        if args.session is None:
            raise ConfigError("--session is required")
        if args.action == "info":
            return _emit(c.get(f"/sessions/{args.session}"))
        if args.action == "delete":
            return _emit(c.delete(f"/sessions/{args.session}"))
        if args.action == "dump":
            return _emit(c.get(f"/sessions/{args.session}/index/dump"))
        if args.action == "step":
            return _emit(c.post(f"/sessions/{args.session}/step", json={"epochs": args.epochs, "verify": bool(args.verify)}))
        if args.action == "query":
            if args.vertex is None:
                raise ConfigError("--vertex is required")
            return _emit(c.post(f"/sessions/{args.session}/queries", json={"query_vertex": args.vertex, "k": args.k or 10}))
        if args.action == "result":
            return _emit(c.get(f"/sessions/{args.session}/queries/{args.query_id}"))
    raise ConfigError(f"unknown action {args.action}")


def build_parser() -> argparse.ArgumentParser:
    parser = _ConfigArgParser(prog="odin", description="Continuous kNN over moving objects on road networks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ConfigArgParser)

    p = sub.add_parser("run", help="run one workload and emit per-query CSV rows")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="rerun the workload across values of one parameter")
    _add_run_flags(p)
    p.add_argument("--axis", required=True, choices=["k", "m", "z", "mu", "objects", "movers", "density"])
    p.add_argument("--values", required=True, help="comma-separated; density accepts 1:N")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("session", help="talk to a running service")
    p.add_argument("action", choices=["create", "info", "step", "query", "result", "dump", "delete"])
    p.add_argument("--url", default="http://127.0.0.1:8000")
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--session")
    p.add_argument("--graph")
    p.add_argument("--objects", type=int)
    p.add_argument("--distribution")
    p.add_argument("--movers", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--z", type=int)
    p.add_argument("--mu", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--vertex", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--query-id", type=int, default=0)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--verify", action="store_true")
    p.set_defaults(func=_cmd_session)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
