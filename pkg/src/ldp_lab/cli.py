"""
ldp-lab command line

  ldp-lab <subcommand> --config FILE [--output DIR] [--workers N]

Exit status: 0 on success, 2 when the run completed but a verdict failed,
1 on any error.
"""

import argparse
import sys
import traceback

from . import __version__
from .errors import LDPLabError
from .experiment import COMMANDS, ExperimentConfig, RunResult, get_driver, load_config
from . import action as action_mod
from . import log_utils
from . import report_utils

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERDICT_FAIL = 2


def write_outputs(exp: ExperimentConfig, subcommand: str, result: RunResult) -> list:
    """Report JSON, CSV tables and path files of one run, then the manifest"""
    out_dir = exp.output
    name = subcommand.replace('-', '_')
    written = [report_utils.write_json(result.report, report_utils.output_path(out_dir, name, 'report'))]
    for table_name, rows in result.tables.items():
        columns = result.table_columns.get(table_name, report_utils.TABLE_COLUMNS)
        written.append(report_utils.write_table_csv(rows, report_utils.output_path(out_dir, table_name, 'table'),
                                                    columns))
    for path_name, path in result.paths.items():
        filepath = report_utils.output_path(out_dir, path_name, 'path')
        written.append(action_mod.write_path_csv(path, filepath))
        log_utils.log(f"Saved {filepath}")
    written.append(report_utils.write_manifest(out_dir, subcommand, exp.Resolved(), written))
    return written


def run(exp: ExperimentConfig, subcommand: str, workers=None) -> int:
    """
    Run one subcommand on a parsed config and write its outputs

    Args:
        exp: Parsed experiment config
        subcommand: One of COMMANDS
        workers: Worker override (flag); falls back to LDP_LAB_WORKERS, then the config

    Returns:
        int: exit status
    """
    driver = get_driver(subcommand)
    n_workers = exp.settings.ResolveWorkers(workers)
    log_utils.log(f"{COMMANDS[subcommand]['title']} ({exp.model.label}, preset {exp.settings.TITLE}, "
                  f"{n_workers} worker(s))")
    result = driver(exp, n_workers)
    write_outputs(exp, subcommand, result)
    if result.failed:
        log_utils.log("verdict: fail")
        return EXIT_VERDICT_FAIL
    return EXIT_OK


def _parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="ldp-lab",
        description="Small-noise large deviations toolkit: hypotheses, actions, minimizers and Monte Carlo checks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name, info in COMMANDS.items():
        sub = subparsers.add_parser(name, help=info['title'])
        sub.add_argument("--config", required=True, help="Experiment config (JSON)")
        sub.add_argument("--output", help="Output directory (overrides the config's 'output')")
        sub.add_argument("--workers", help="Worker threads or 'auto' (overrides LDP_LAB_WORKERS and the config)")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = _parse_args(argv)
    try:
        exp = load_config(args.config)
        if args.output:
            exp.output = args.output
        return run(exp, args.subcommand, args.workers)
    except LDPLabError as e:
        log_utils.error(f"[{e.module or 'ldp_lab'}] {e}")
        return EXIT_ERROR
    except Exception:
        traceback.print_exc()
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
