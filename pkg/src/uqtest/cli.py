"""Command-line entry point.

Exit codes for ``run``: 0 overall pass, 1 overall fail or inconclusive,
2 execution error, 3 invalid configuration or missing file. The other
subcommands use 0 / 2 / 3 with the same meaning.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import harness, report as rep
from .datasel import SearchGenerated, parse_spec, search
from .errors import ConfigurationError, ParseError, SpecificationError, UQError
from .nn import save_checkpoint
from .suite import (_Deferred, build_estimator, build_model, ensemble_member_specs, load_context,
                    load_suite_file, read_config)
from .synthdata import generate, save_jsonl

EXIT_PASS, EXIT_FAIL, EXIT_EXEC, EXIT_CONFIG = 0, 1, 2, 3
LOG_ENV = "UQTEST_LOG"
log = logging.getLogger("uqtest")


def _setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _config(path):
    doc = read_config(path)
    return doc, Path(path).resolve().parent


def cmd_gen(args):
    doc, base = _config(args.config)
    ctx = load_context(doc, base)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, g in ctx["generators"].items():
        raw = doc["generators"][name]
        n = args.n if args.n is not None else int(raw.get("n", 1000))
        seed = args.seed if args.seed is not None else int(raw.get("seed", ctx["seed"]))
        path = out / f"{name}.jsonl"
        save_jsonl(generate(g, n, seed), path)
        print(f"{path}\t{n} rows")
    return EXIT_PASS


def _trainable(doc, path):
    """Yield ``(path, model spec)`` for every model block with a training section."""
    if not isinstance(doc, dict):
        return
    kind = doc.get("kind")
    if kind == "deep_ensemble":
        for p, d in ensemble_member_specs(doc, path):
            yield p, d
    elif isinstance(doc.get("model"), dict):
        yield f"{path}.model", doc["model"]
    if isinstance(doc.get("inner"), dict):
        yield from _trainable(doc["inner"], f"{path}.inner")


def cmd_train(args):
    doc, base = _config(args.config)
    ctx = load_context(doc, base)
    blocks = list(_trainable(doc.get("estimator"), "estimator"))
    if isinstance(doc.get("baseline"), dict):
        blocks.append(("baseline", doc["baseline"]))
    built = [(p, build_model(d, ctx, p)) for p, d in blocks]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p, m in built:
        if not isinstance(m, _Deferred):
            continue
        res = m.materialize()
        file = out / f"{p}.json"
        save_checkpoint(res, file)
        print(f"{file}")
    return EXIT_PASS


def cmd_run(args):
    suite = load_suite_file(args.config, seed=args.seed, fail_fast=True if args.fail_fast else None)
    run = harness.run_suite(suite, jobs=args.jobs or os.cpu_count() or 1)
    report = rep.build_report(run)
    text = rep.dumps(report)
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    msg = f"overall: {report['overall']}"
    if report["inconclusive"]:
        msg += " (inconclusive)"
    print(msg, file=sys.stderr)
    return EXIT_PASS if report["overall"] == "pass" else EXIT_FAIL


def cmd_search(args):
    doc, base = _config(args.config)
    ctx = load_context(doc, base)
    named = ctx["named"]
    name = args.spec or next((k for k, v in named.items() if isinstance(v, dict) and v.get("kind") == "search"),
                             None)
    if name is None:
        raise ConfigurationError("config has no search data spec (use --spec)", "data")
    spec = parse_spec(name, ctx["generators"], named, base, ctx["odd"])
    if not isinstance(spec, SearchGenerated):
        raise ConfigurationError(f"data spec {name!r} is not a search spec", f"data.{name}")
    cfg = spec.config
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    est = build_estimator(doc.get("estimator"), ctx)()
    found = search(est, cfg, spec.oracle)
    rows = [{"rank": i, "x": r["x"], "score": r["score"], "attribution": r["attribution"],
             "restart": r["restart"]} for i, r in enumerate(found)]
    text = json.dumps({"spec": name, "objective": cfg.objective, "results": rows}, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_PASS


def cmd_render(args):
    try:
        report = json.loads(Path(args.report).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read report: {exc}", args.report) from None
    except json.JSONDecodeError as exc:
        raise rep.SchemaError(f"report is not JSON: {exc}", args.report) from None
    md, warnings = rep.render_markdown(report)
    for w in warnings:
        print(f"integrity warning: {w}", file=sys.stderr)
    if args.md:
        Path(args.md).write_text(md)
    else:
        sys.stdout.write(md)
    return EXIT_PASS


def build_parser():
    parser = argparse.ArgumentParser(prog="uqtest", description="Requirement-driven testing of uncertainty estimators")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write one JSONL dataset per configured generator")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, help="row count (overrides per-generator 'n')")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train the models of the estimator block and save checkpoints")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="execute a test suite and write its report")
    p.add_argument("--config", required=True)
    p.add_argument("--report", help="report path (default: stdout)")
    p.add_argument("--seed", type=int, help="override the suite seed")
    p.add_argument("--fail-fast", action="store_true", help="skip later levels when a technical test fails")
    p.add_argument("--jobs", type=int, default=None, help="worker threads (default: available cores)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("search", help="list worst-case inputs found by uncertainty-guided search")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--spec", help="name of the search data spec (default: the first one)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("render", help="render a report as markdown")
    p.add_argument("--report", required=True)
    p.add_argument("--md")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ParseError, SpecificationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UQError as exc:
        print(f"execution error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_EXEC
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled", exc_info=True)
        print(f"execution error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_EXEC


if __name__ == "__main__":
    sys.exit(main())
