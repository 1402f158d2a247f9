"""Command line entry point ``deconlab``.

Exit codes: 0 success, 1 configuration error, 2 runtime error,
3 verdict failure (``summarize --assert`` or an invalid ``check-graph``
adjustment set).
"""

from __future__ import annotations

import argparse
import sys

from . import graphs, scmfile
from .errors import ConfigError, DeconlabError
from .harness import ExperimentConfig, ResultsTable, resolve_seed, run_and_write, summarize
from .scenarios import SCENARIO_IDS, VARIANTS, build_scenario, export_scenarios

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERDICT = 0, 1, 2, 3


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _cmd_run(args) -> int:
    config = resolve_seed(ExperimentConfig.load(args.config), args.seed)
    table, path = run_and_write(config, args.out, args.jobs)
    if path is None:
        sys.stdout.write(table.to_csv())
    else:
        print(f"wrote {len(table.rows)} rows to {path}")
    return EXIT_OK


def _cmd_scenarios(args) -> int:
    if args.action == "list":
        for sid in SCENARIO_IDS:
            sc = build_scenario(sid)
            variants = ",".join(VARIANTS.get(sid, ("default",)))
            print(f"{sid}  m={sc.m:<3} truth={sc.truth:<6g} {sc.estimand.name:<20} {sc.description}"
                  f"  [variants: {variants}]")
    elif args.action == "show":
        if args.id is None:
            raise ConfigError("scenarios show needs a scenario id")
        sys.stdout.write(scmfile.dumps(build_scenario(args.id).scm))
    else:
        for path in export_scenarios(args.dir or "."):
            print(path)
    return EXIT_OK


def _cmd_check_graph(args) -> int:
    scm = scmfile.load(args.file)
    g = scm.graph
    causes = _names(args.treatments) or list(g.cause_order)
    outcome = args.outcome or g.outcome
    z = _names(args.adjust)
    verdict = graphs.is_valid_adjustment(g, z, causes, outcome)
    print(f"adjustment set {{{', '.join(z)}}} for {{{', '.join(causes)}}} -> {outcome}: "
          f"{'VALID' if verdict else 'INVALID'}")
    if not verdict:
        print(f"  witness: {verdict.describe(g)}")
    print()
    print("node classification")
    for node in g.names:
        if node in causes or node == outcome:
            continue
        print(f"  {node:<6} {graphs.classify_node(g, node, causes, outcome).label}")
    print()
    print(graphs.check_assumptions(g, causes, outcome, z).render())
    return EXIT_OK if verdict else EXIT_VERDICT


def _cmd_summarize(args) -> int:
    summary = summarize(ResultsTable.read(args.results))
    print(summary.render())
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(summary.to_json())
    else:
        print(summary.to_json())
    if args.assert_verdicts and summary.failures:
        return EXIT_VERDICT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deconlab", description="Substitute-confounder simulation lab.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="results path (.csv or .json); defaults to the config's output")
    run.add_argument("--seed", type=int, help="base seed (overrides DECONLAB_SEED and the config)")
    run.add_argument("--jobs", type=int, help="worker processes")
    run.set_defaults(func=_cmd_run)

    sc = sub.add_parser("scenarios", help="list, show or export the scenario catalog")
    sc.add_argument("action", choices=("list", "show", "export"))
    sc.add_argument("id", nargs="?", choices=SCENARIO_IDS)
    sc.add_argument("--dir", help="export directory")
    sc.set_defaults(func=_cmd_scenarios)

    cg = sub.add_parser("check-graph", help="check an adjustment set against an SCM file")
    cg.add_argument("--file", required=True)
    cg.add_argument("--treatments", default="", help="comma-separated causes (default: all)")
    cg.add_argument("--outcome", default=None)
    cg.add_argument("--adjust", default="", help="comma-separated adjustment set")
    cg.set_defaults(func=_cmd_check_graph)

    sm = sub.add_parser("summarize", help="summarize a results file")
    sm.add_argument("results")
    sm.add_argument("--assert", dest="assert_verdicts", action="store_true",
                    help="exit 3 if any registered verdict fails")
    sm.add_argument("--json", help="write the JSON block here instead of stdout")
    sm.set_defaults(func=_cmd_summarize)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors count as configuration errors; --help exits 0
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DeconlabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
