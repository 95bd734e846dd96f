"""Command-line entry point: ``build-adb``, ``abduce``, ``eval``.

Exit codes: 0 success, 1 configuration or data error, 2 bad abduction input.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .abduction import AbductionParams, write_ledger_csv
from .adb import AdbFormatError, build_adb, load_adb, persist_adb, store_checksum
from .context import UnresolvableExamples
from .evalharness import BenchmarkError, load_benchmark, run_benchmark, write_report
from .pipeline import discover
from .qbuild import emit_ast, emit_sql
from .query import QueryError
from .relstore import LoadError, SchemaError, eval_query, load_schema_file, load_store

logger = logging.getLogger("abductdb")

EXIT_OK, EXIT_CONFIG, EXIT_INPUT = 0, 1, 2

# flag name -> (params field, type)
PARAM_FLAGS = {
    "rho": ("rho", float),
    "gamma": ("gamma", float),
    "eta": ("eta", float),
    "tau-a": ("tau_a", int),
    "tau-s": ("tau_s", float),
    "outlier-k": ("outlier_k", float),
}
ENV_PREFIX = "ABDUCTDB_"


class ConfigError(Exception):
    pass


class InputError(Exception):
    pass


@dataclass
class CliConfig:
    data_dir: Optional[Path]
    schema: Optional[Path]
    adb_dir: Optional[Path]
    params: AbductionParams
    preset: Optional[str]
    emit: str = "adb-sql"
    verbosity: int = 0


def resolve_params(args, environ=os.environ) -> tuple[AbductionParams, Optional[str]]:
    """Preset, then ``--params`` file, then environment, then flags."""
    preset = args.preset or environ.get(ENV_PREFIX + "PRESET")
    doc: dict = {}
    if args.params:
        try:
            with open(args.params, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read parameter file {args.params}: {e.strerror}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"parameter file {args.params} is not valid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"parameter file {args.params} must hold an object")
    if preset:
        doc["preset"] = preset
    for flag, (name, typ) in PARAM_FLAGS.items():
        env = environ.get(ENV_PREFIX + name.upper())
        val = getattr(args, name)
        try:
            if val is not None:
                doc[name] = val
            elif env is not None:
                doc[name] = typ(env)
        except ValueError:
            raise ConfigError(f"environment variable {ENV_PREFIX + name.upper()}={env!r} is not a valid {typ.__name__}") from None
    try:
        return AbductionParams.from_doc(doc), doc.get("preset")
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid parameters: {e}") from None


def _config(args) -> CliConfig:
    params, preset = resolve_params(args)
    return CliConfig(
        Path(args.data_dir) if args.data_dir else None,
        Path(args.schema) if args.schema else None,
        Path(args.adb_dir) if args.adb_dir else None,
        params,
        preset,
        getattr(args, "emit", "adb-sql"),
        args.verbose,
    )


def _require(path: Optional[Path], flag: str, is_dir: bool) -> Path:
    if path is None:
        raise ConfigError(f"{flag} is required")
    if is_dir and not path.is_dir():
        raise ConfigError(f"{flag}: directory not found: {path}")
    if not is_dir and not path.is_file():
        raise ConfigError(f"{flag}: file not found: {path}")
    return path


def _load_store(cfg: CliConfig):
    schema = load_schema_file(_require(cfg.schema, "--schema", False))
    return load_store(schema, _require(cfg.data_dir, "--data-dir", True))


def _load_world(cfg: CliConfig):
    store = _load_store(cfg)
    adb = load_adb(_require(cfg.adb_dir, "--adb-dir", True))
    if adb.source_checksum and adb.source_checksum != store_checksum(store):
        raise ConfigError(f"alpha-DB in {cfg.adb_dir} was built from different data; rebuild it with build-adb")
    return store, adb


# -- commands --------------------------------------------------------------------

def cmd_build_adb(cfg: CliConfig, out: Path, force: bool, depth: int) -> int:
    if out.exists() and any(out.iterdir()):
        if not force:
            raise ConfigError(f"{out} already exists and is not empty; pass --force to rebuild")
        shutil.rmtree(out)
    start = time.perf_counter()
    store = _load_store(cfg)
    adb = build_adb(store, depth)
    persist_adb(adb, out)
    elapsed = time.perf_counter() - start
    print(f"alpha-DB written to {out}")
    for name in sorted(store.tables):
        print(f"  relation {name}: {store.table(name).n_rows} rows")
    for spec in adb.derived_specs:
        via = " -> ".join(spec.facts)
        print(f"  derived {spec.name}: {len(adb.derived[spec.name].rows)} rows ({spec.entity} via {via} to {spec.attribute})")
    print(f"  built in {elapsed:.3f}s")
    return EXIT_OK


def _read_examples(path: Optional[str]) -> list[str]:
    if path and path != "-":
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        except OSError as e:
            raise ConfigError(f"cannot read examples file {path}: {e.strerror}") from None
    else:
        lines = sys.stdin.read().splitlines()
    return [ln.strip() for ln in lines if ln.strip()]


def _print_ledger(result, out) -> None:
    out.write("filter ledger:\n")
    for e in result.ledger:
        cmp = ">" if e.decision else "<="
        out.write(
            f"  {e.filter.describe():<40} psi={e.psi:.4g} delta={e.delta:.4g} alpha={e.alpha} "
            f"lambda={e.lam} prior={e.prior:.4g}  include {e.include:.4g} {cmp} exclude {e.exclude:.4g}"
            f"  -> {'include' if e.decision else 'exclude'}\n"
        )


def _abduce_once(examples, store, adb, cfg: CliConfig, args, out) -> None:
    if not examples:
        raise InputError("no examples given (one per line via --examples or standard input)")
    try:
        found = discover(examples, store, adb, cfg.params)
    except UnresolvableExamples as e:
        raise InputError(f"examples could not be resolved: {e}") from None
    if cfg.emit == "ast":
        out.write(emit_ast(found.query))
    else:
        mode = "adb" if cfg.emit == "adb-sql" else "original"
        out.write(emit_sql(found.query, mode, store.schema).sql_text)
    if args.ledger:
        _print_ledger(found.result, out)
    if args.ledger_csv:
        with open(args.ledger_csv, "w", encoding="utf-8", newline="") as fh:
            write_ledger_csv(found.result.ledger, fh)
    if args.show_results:
        rows = sorted(eval_query(store, found.query, adb))
        out.write(f"{len(rows)} result tuple(s)\n")
        for r in rows[: args.show_results]:
            out.write(f"  {r[0]}\n")


def cmd_abduce(cfg: CliConfig, args) -> int:
    store, adb = _load_world(cfg)
    if not args.interactive:
        _abduce_once(_read_examples(args.examples), store, adb, cfg, args, sys.stdout)
        return EXIT_OK
    examples = _read_examples(args.examples) if args.examples else []
    if examples:
        _abduce_once(examples, store, adb, cfg, args, sys.stdout)
    prompt = sys.stdin.isatty()
    while True:
        if prompt:
            print("example> ", end="", flush=True)
        line = sys.stdin.readline()
        if not line:
            break
        line = line.strip()
        if not line:
            continue
        examples.append(line)
        try:
            _abduce_once(examples, store, adb, cfg, args, sys.stdout)
        except InputError as e:
            print(f"error: {e}; dropping {line!r}", file=sys.stderr)
            examples.pop()
        sys.stdout.flush()
    return EXIT_OK


def cmd_eval(cfg: CliConfig, args) -> int:
    store, adb = _load_world(cfg)
    bench = _require(Path(args.benchmark) if args.benchmark else None, "--benchmark", False)
    with open(bench, encoding="utf-8") as fh:
        cases = load_benchmark(fh)
    explicit = (
        cfg.preset is not None
        or args.params
        or any(getattr(args, n) is not None or ENV_PREFIX + n.upper() in os.environ for n, _ in PARAM_FLAGS.values())
    )
    params = cfg.params if explicit else None
    rows = run_benchmark(cases, store, adb, params, cfg.preset if explicit else None)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        write_report(rows, fh, timings=args.timings)
    violations = sum(r.containment_violations for r in rows)
    print(f"report written to {out} ({len(rows)} rows, {violations} containment violations)")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data-dir", help="directory with one <relation>.csv per relation")
    common.add_argument("--schema", help="schema JSON file")
    common.add_argument("--adb-dir", help="alpha-DB directory")
    common.add_argument("--params", help="JSON file with parameter values (and optional 'preset')")
    common.add_argument("--preset", choices=["qbe", "qre"], help="parameter preset (qre: optimistic, closed world)")
    for flag, (name, typ) in PARAM_FLAGS.items():
        common.add_argument(f"--{flag}", dest=name, type=typ, default=None)
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="abductdb", description="Discover SQL queries from example tuples.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-adb", parents=[common], help="build and persist the alpha-DB")
    b.add_argument("--out", help="output directory (defaults to --adb-dir)")
    b.add_argument("--force", action="store_true", help="overwrite an existing alpha-DB directory")
    b.add_argument("--depth", type=int, default=2, choices=[1, 2], help="fact tables per derived property path")

    a = sub.add_parser("abduce", parents=[common], help="abduce a query from examples")
    a.add_argument("--examples", help="file with one example per line (default: standard input)")
    a.add_argument("--emit", choices=["adb-sql", "original-sql", "ast"], default="adb-sql")
    a.add_argument("--ledger", action="store_true", help="print the per-filter decision ledger")
    a.add_argument("--ledger-csv", help="write the ledger as CSV")
    a.add_argument("--show-results", type=int, default=0, metavar="N", help="print up to N result tuples")
    a.add_argument("--interactive", action="store_true", help="re-abduce after each example line read from standard input")

    e = sub.add_parser("eval", parents=[common], help="run a benchmark file")
    e.add_argument("--benchmark", help="benchmark JSON file")
    e.add_argument("--out", required=True, help="CSV report path")
    e.add_argument("--timings", action="store_true", help="add a wall_time column (makes reports run-dependent)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _config(args)
        if args.command == "build-adb":
            out = args.out or args.adb_dir
            if not out:
                raise ConfigError("--out (or --adb-dir) is required")
            return cmd_build_adb(cfg, Path(out), args.force, args.depth)
        if args.command == "abduce":
            return cmd_abduce(cfg, args)
        return cmd_eval(cfg, args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NotImplementedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, SchemaError, LoadError, AdbFormatError, BenchmarkError, QueryError, OverflowError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
