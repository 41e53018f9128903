"""Command line entry point: ``ivrepr {gen,run,bench,selftest}``.

Exit codes: 0 success, 1 usage or config error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .dgp import Variant, generate
from .intervene import METRICS
from .store import save_dataset, write_dataset_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("ivrepr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seeds(text: str) -> tuple[int, ...]:
    try:
        return ex.parse_seeds(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment config")
    common.add_argument("--seeds", type=_seeds, metavar="A..B", help="inclusive seed range or comma list")
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="worker processes (default 1)")
    common.add_argument("--metric", choices=METRICS, help="improvement baseline")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="ivrepr", description="IV-guided representation learning experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--variant", choices=[v.value for v in Variant])
    g.add_argument("--seed", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--with-hidden", action="store_true", help="include hidden_* columns in the CSV export")
    g.add_argument("--no-csv", action="store_true", help="skip the CSV export")

    r = sub.add_parser("run", parents=[common], help="run one experiment config over its seeds")
    r.add_argument("--variant", choices=[v.value for v in Variant])
    r.add_argument("--method", choices=ex.METHODS)
    r.add_argument("--alpha", type=float)
    r.add_argument("--n", type=int)
    r.add_argument("--m", type=int)
    r.add_argument("--timing", action="store_true", help="record wall_time_s (breaks byte determinism)")

    b = sub.add_parser("bench", parents=[common], help="run a config set and summarize across seeds")
    b.add_argument("--timing", action="store_true", help="record wall_time_s (breaks byte determinism)")
    b.add_argument("--bins", type=int, default=20)

    sub.add_parser("selftest", parents=[common], help="gradient, HSIC and identification checks")
    return p


def _base_config(args) -> dict:
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if "experiments" in doc:
            raise UsageError(f"{args.command} takes a single experiment; use bench for config sets")
        return doc
    return {}


def _overrides(args, cfg: dict) -> dict:
    if getattr(args, "variant", None):
        cfg["variant"] = args.variant
    if getattr(args, "method", None):
        cfg.pop("methods", None)
        cfg["method"] = args.method
    if getattr(args, "alpha", None) is not None:
        cfg["alpha"] = args.alpha
    dims = dict(cfg.get("dims", {}))
    for key in ("n", "m"):
        if getattr(args, key, None) is not None:
            dims[key] = getattr(args, key)
    if dims:
        cfg["dims"] = dims
    if args.seeds is not None:
        cfg["seeds"] = list(args.seeds)
    if args.metric:
        cfg["metric"] = args.metric
    if getattr(args, "timing", False):
        cfg["record_timing"] = True
    return cfg


def cmd_gen(args) -> int:
    cfg = _base_config(args)
    if args.seed is not None:
        cfg["seeds"] = [args.seed]
    config = ex.ExperimentConfig.from_dict(_overrides(args, cfg))
    if len(config.seeds) != 1:
        raise UsageError("gen writes one dataset; pass a single seed")
    seed = config.seeds[0]
    params, data = generate(config.variant, config.dims, seed, config.noise_scales)
    out = Path(args.out or config.out or f"{config.variant}_seed{seed}.ivrb")
    out.parent.mkdir(parents=True, exist_ok=True)
    digest = save_dataset(out, params, data, with_hidden=True)
    manifest = {
        "variant": config.variant,
        "dims": json.loads(json.dumps(config.dims.__dict__)),
        "seed": seed,
        "noiseless": config.noiseless,
        "sha256": digest,
        "container": out.name,
    }
    if not args.no_csv:
        csv_path = out.with_suffix(".csv")
        write_dataset_csv(csv_path, data, with_hidden=args.with_hidden)
        manifest["csv"] = csv_path.name
    manifest_path = out.with_name(out.name + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"{out}  sha256={digest}")
    return EXIT_OK


def _finish_rows(rows: list[dict]) -> int:
    failed = [r for r in rows if r["status"] != "ok"]
    for r in failed:
        print(f"seed {r['seed']} {r['method']}: {r['status']}", file=sys.stderr)
    return EXIT_NUMERIC if rows and len(failed) == len(rows) else EXIT_OK


def cmd_run(args) -> int:
    config = ex.ExperimentConfig.from_dict(_overrides(args, _base_config(args)))
    rows = ex.run_experiment(config, args.threads)
    text = ex.rows_to_csv(rows, config.record_timing)
    out = args.out or config.out
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return _finish_rows(rows)


def cmd_bench(args) -> int:
    if not args.config:
        raise UsageError("bench needs --config")
    doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    entries = doc.pop("experiments", None) or [{}]
    configs = [ex.ExperimentConfig.from_dict(_overrides(args, {**doc, **e})) for e in entries]
    rows, summary = ex.run_bench(configs, args.threads)
    out = Path(args.out or "bench_out")
    out.mkdir(parents=True, exist_ok=True)
    timing = any(c.record_timing for c in configs)
    (out / "results.csv").write_text(ex.rows_to_csv(rows, timing), encoding="utf-8")
    (out / "summary.csv").write_text(ex.summary_csv(summary), encoding="utf-8")
    table = ex.summary_table(summary)
    (out / "summary.txt").write_text(table, encoding="utf-8")
    (out / "histogram.csv").write_text(ex.histogram_csv(rows, args.bins), encoding="utf-8")
    sys.stdout.write(table)
    return _finish_rows(rows)


def cmd_selftest(args) -> int:
    from .selftest import main as selftest_main

    return selftest_main()


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "bench": cmd_bench, "selftest": cmd_selftest}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("ivrepr: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ivrepr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"ivrepr: error: bad config JSON: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"ivrepr: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"ivrepr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"ivrepr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
