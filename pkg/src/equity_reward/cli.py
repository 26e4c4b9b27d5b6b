"""Command line: ``equity-reward {profiles build, run, report}``.

Exit status is 0 on success, 2 for usage errors and otherwise the
``exit_code`` of the error category (see ``errors.py``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .comfort import DEFAULT_PROFILES, profiles_to_json
from .engineers import HttpEngineer, ScriptedEngineer
from .errors import ConfigurationError, EquityRewardError
from .profiles import TABLE1_QUERIES, build_profile, load_records, profile_counts, queries_from_json
from .refinement import ExperimentConfig, run_experiment
from .reporting import report_from_dir

log = logging.getLogger("equity_reward")

IO_EXIT = 4


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def cmd_profiles_build(args) -> int:
    if args.builtin:
        profiles = DEFAULT_PROFILES
    else:
        if not args.records:
            raise ConfigurationError("--records is required unless --builtin is given")
        queries = queries_from_json(Path(args.config).read_text()) if args.config else TABLE1_QUERIES
        with open(args.records, "rb") as fh:
            loaded = load_records(fh)
        print(f"loaded {len(loaded.records)} records, rejected {loaded.n_rejected}", file=sys.stderr)
        for reason, n in sorted(loaded.rejected.items()):
            print(f"  rejected ({reason}): {n}", file=sys.stderr)
        profiles = []
        for q in queries:
            d = profile_counts(loaded.records, q)
            print(f"  {q.id}: {d.n_filtered} matched, {d.n_comfortable} comfortable", file=sys.stderr)
            profiles.append(build_profile(loaded.records, q))
    text = profiles_to_json(profiles)
    if args.out:
        _write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def _engineer(kind: str, config: ExperimentConfig):
    if kind == "scripted":
        return ScriptedEngineer(config.engineer.get("weights"))
    settings = {k: v for k, v in config.engineer.items() if k != "weights"}
    return HttpEngineer(settings.pop("base_url", None), settings.pop("model", None), **settings)


def cmd_run(args) -> int:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seeds:
        config = replace(config, seeds=tuple(args.seeds))
    if args.workers:
        config = replace(config, max_workers=args.workers)
    # builds the engineer (and checks credentials) before any training starts
    engineer = _engineer(args.engineer, config)
    result = run_experiment(config, engineer, args.out)
    root = Path(args.out) / result.experiment_id
    for r in result.rounds:
        st = r.stats()
        print(f"round {r.round}: cost {st['composite_cost']['mean']:.3f} ± {st['composite_cost']['std']:.3f}, "
              f"CEI {st['cei']['mean']:.4f}, worst {st['worst_profile']}", file=sys.stderr)
    print(root)
    return 0


def cmd_report(args) -> int:
    bundle = report_from_dir(args.results)
    if args.out:
        for p in bundle.write(args.out, args.format):
            print(p)
    elif args.format == "json":
        sys.stdout.write(bundle.to_json())
    else:
        raise ConfigurationError("csv output needs --out (one file per table)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="equity-reward", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    prof = sub.add_parser("profiles", help="occupant profile documents")
    prof_sub = prof.add_subparsers(dest="action", required=True)
    pb = prof_sub.add_parser("build", help="derive profiles from comfort records")
    pb.add_argument("--records", help="CSV of comfort records")
    pb.add_argument("--builtin", action="store_true", help="emit the built-in profile constants")
    pb.add_argument("--config", help="JSON document with profile queries")
    pb.add_argument("--out", help="output path (default: stdout)")
    pb.set_defaults(func=cmd_profiles_build)

    run = sub.add_parser("run", help="run the three-round experiment")
    run.add_argument("--config", help="experiment JSON config")
    run.add_argument("--engineer", choices=("scripted", "http"), default="scripted")
    run.add_argument("--seeds", type=int, nargs="+")
    run.add_argument("--workers", type=int, help="parallel seed jobs per round")
    run.add_argument("--out", default="results")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="tables and series from a results directory")
    rep.add_argument("results", help="results/<experiment-id> directory")
    rep.add_argument("--format", choices=("json", "csv"), default="json")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EquityRewardError as e:
        print(f"error [{type(e).__name__}]: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, json.JSONDecodeError) as e:
        print(f"error [IOError]: {e}", file=sys.stderr)
        return IO_EXIT


if __name__ == "__main__":
    sys.exit(main())
