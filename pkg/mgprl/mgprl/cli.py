#!/usr/bin/env python3
"""cli

Argument parsing and subcommand dispatch. Every subcommand builds the
configuration, hands it to :class:`mgprl.front_end.FrontEnd` and turns
library errors into exit statuses:

* ``0`` success
* ``1`` a failed self-test, an empty bundle or any other run failure
* ``2`` a configuration problem
"""
import os, sys, argparse, logging

from mgprl import __version__
from mgprl.config import load_config
from mgprl.front_end import FrontEnd
from mgprl.exceptions import MgprlError, ConfigError, EmptyBundleError, NoPluginLoadedError

log = logging.getLogger(__name__)

APP_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
"""str: directory holding config/ and worlds/."""

DEFAULT_CONFIG = os.path.join(APP_ROOT, "config", "config.yml")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _numbers(text):
    """argparse type for comma separated numbers."""
    try:
        return [float(v) if any(c in v for c in ".eE") else int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma separated numbers, got {0!r}".format(text))


def build_parser():
    """argparse.ArgumentParser: the ``mgprl`` command line."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=os.environ.get("MGPRL_CONFIG", DEFAULT_CONFIG),
                        help="yaml config file or a run manifest (default: %(default)s)")
    common.add_argument("--out", help="output directory (default: OUT_DIR, or MGPRL_OUT_DIR)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, repeatable")
    common.add_argument("--debug", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="mgprl", description="Multi-robot relative localization from RSSI fields.")
    parser.add_argument("--version", action="version", version="%(prog)s {0}".format(__version__))
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    sub.add_parser("run", parents=[common], help="run one episode and write its bundle")

    sweep = sub.add_parser("sweep", parents=[common], help="run episodes over a parameter axis")
    sweep.add_argument("axis", help="numeric config key, e.g. noise_level or alignment.lambda")
    sweep.add_argument("values", type=_numbers, help="comma separated values, e.g. 0,1,2")
    sweep.add_argument("--seeds", type=int, default=1, help="seeds per value (default: %(default)s)")
    sweep.add_argument("--jobs", type=int, default=1, help="worker processes (default: %(default)s)")

    sub.add_parser("selftest", parents=[common], help="run the oracle suites")

    plot = sub.add_parser("plot", parents=[common], help="draw images from a bundle")
    plot.add_argument("bundle", help="bundle directory written by run")

    bench = sub.add_parser("bench", parents=[common], help="joint vs independent fit timing")
    bench.add_argument("--gammas", type=_numbers, default=[25, 50, 100, 200],
                       help="training location counts (default: 25,50,100,200)")
    bench.add_argument("--m", type=int, default=8, help="access points (default: %(default)s)")
    return parser


def _configure_logging(debug):
    if debug:
        logging.basicConfig(level=logging.DEBUG)
        logging.debug("Debug mode active.")
    else:
        logging.basicConfig(level=logging.INFO)


def _config_from(args):
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append("seed={0}".format(args.seed))
    config = load_config(args.config, overrides, root_path=APP_ROOT)
    if args.out:
        config["OUT_DIR"] = args.out
    return config


def cmd_run(fe, args):
    result, out_dir = fe.run()
    errors = sum(1 for r in result.records if r.error)
    print("wrote {0} ({1} metric rows, {2} errors)".format(out_dir, len(result.records), errors))
    return EXIT_OK


def cmd_sweep(fe, args):
    if args.seeds < 1 or args.jobs < 1:
        raise ConfigError("SWEEP", "--seeds and --jobs must be at least 1")
    rows = fe.sweep(args.axis, args.values, seeds=args.seeds, jobs=args.jobs)
    for row in rows:
        print("{0}={1}: ale_ap {2:.3f} +- {3:.3f}, ale_r {4:.3f} +- {5:.3f} ({6} runs)".format(
            args.axis, row["value"], row["ale_ap_mean"], row["ale_ap_std"],
            row["ale_r_mean"], row["ale_r_std"], row["runs"]))
    return EXIT_OK


def cmd_selftest(fe, args):
    results = fe.selftest()
    width = max([len(r.oracle) + len(r.check) + 1 for r in results] + [10])
    for r in results:
        print("{0:<{1}}  {2}  {3}".format(r.oracle + "." + r.check, width, "PASS" if r.passed else "FAIL", r.detail))
    failed = [r for r in results if not r.passed]
    print("{0} checks, {1} failed".format(len(results), len(failed)))
    return EXIT_FAILURE if failed or not results else EXIT_OK


def cmd_plot(fe, args):
    written = fe.plot(args.bundle, args.out)
    print("wrote {0} files".format(len(written)))
    return EXIT_OK


def cmd_bench(fe, args):
    rows, path = fe.bench(args.gammas, args.m)
    for row in rows:
        print("gamma={0}: joint {1:.3f}s, independent {2:.3f}s, ratio {3:.2f}".format(
            row["gamma"], row["joint_seconds"], row["independent_seconds"], row["ratio"]))
    print("wrote {0}".format(path))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "selftest": cmd_selftest,
    "plot": cmd_plot,
    "bench": cmd_bench,
}


def main(argv=None):
    """Parses ``argv`` and runs the subcommand.

    Returns:
        int. The exit status.
    """
    args = build_parser().parse_args(argv)
    try:
        config = _config_from(args)
        _configure_logging(args.debug or bool(config.get("DEBUG")))
        log.debug("Running {0} with config {1}".format(args.command, config.get("CONFIG_PATH")))
        fe = FrontEnd(config)
        return COMMANDS[args.command](fe, args)
    except (ConfigError, NoPluginLoadedError) as e:
        print("error: {0}".format(e), file=sys.stderr)
        return EXIT_CONFIG
    except EmptyBundleError as e:
        print("error: {0}".format(e), file=sys.stderr)
        return EXIT_FAILURE
    except MgprlError as e:
        log.debug("Run failed", exc_info=True)
        print("error: {0}".format(e), file=sys.stderr)
        return EXIT_FAILURE
