"""Command line entry point: ``bibolab simulate | prepare | run-mc | report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

log = logging.getLogger("bibolab")


def default_config_path() -> Path:
    return Path(str(resources.files("bibolab") / "data" / "default_config.json"))


def _load(path):
    return json.loads(Path(path).read_text()) if path else {}


def cmd_simulate(args):
    from .dataset import Dataset, save_csv
    from .scenario import load_scenario_config

    net, rssi, n_users, seed = load_scenario_config(args.config or default_config_path())
    if args.seed is not None:
        seed = args.seed
    if args.users is not None:
        n_users = args.users
    net.validate()
    rssi.validate()
    from .scenario import simulate_scenario

    ds = Dataset.from_points(simulate_scenario(net, rssi, n_users, seed))
    save_csv(ds, args.out)
    log.info("wrote %d rows for %d users to %s", len(ds), n_users, args.out)


def cmd_prepare(args):
    from .dataset import save_csv
    from .harness import prepare_tables

    imp = _load(args.config).get("run", {}).get("imputation", {})
    clean, tables = prepare_tables(args.data, ("BLE", "GPS"), imp)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(clean, out / "clean.csv")
    for sensor, t in tables.items():
        t.to_csv(out / f"features_{sensor}.csv")
    log.info("wrote clean data and feature tables to %s", out)


def cmd_run_mc(args):
    from .harness import RunConfig, run_monte_carlo, write_results_csv

    cfg = RunConfig.from_json(args.config or default_config_path())
    if args.seed is not None:
        cfg.seed = args.seed
    if args.data:
        cfg.dataset = args.data
    table = run_monte_carlo(cfg, progress=lambda s, m, lam: log.info("%s %s lambda=%g done", s, m, lam))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_results_csv(table, out)
    meta = {"master_seed": cfg.seed, "hyperparameters": table.hyperparameters,
            "sweep": cfg.sweep, "draws": cfg.draws}
    out.with_name(out.stem + "_run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    log.info("wrote %d records to %s", len(table), out)


def cmd_report(args):
    from .harness import aggregate_report, read_results_csv, write_report

    summary = aggregate_report(read_results_csv(args.results))
    run_meta = Path(args.results).with_name(Path(args.results).stem + "_run.json")
    if run_meta.exists():
        summary["hyperparameters"] = json.loads(run_meta.read_text())["hyperparameters"]
    js, cv = write_report(summary, args.out_dir)
    log.info("wrote %s and %s", js, cv)


def build_parser():
    p = argparse.ArgumentParser(prog="bibolab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate the scenario and write the dataset CSV")
    s.add_argument("--config", help="JSON config (defaults to the shipped scenario)")
    s.add_argument("--seed", type=int)
    s.add_argument("--users", type=int)
    s.add_argument("--out", default="dataset.csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("prepare", help="clean, impute and build feature tables")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--out-dir", default="prepared")
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("run-mc", help="run the Monte-Carlo error sweep")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, help="override the master seed")
    s.add_argument("--data", help="dataset CSV (overrides the config)")
    s.add_argument("--out", default="results.csv")
    s.set_defaults(func=cmd_run_mc)

    s = sub.add_parser("report", help="summarise a results CSV")
    s.add_argument("--results", default="results.csv")
    s.add_argument("--out-dir", default="report")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
