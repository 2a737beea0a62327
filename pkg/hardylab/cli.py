import argparse
import logging
import os
import sys
from multiprocessing import freeze_support

from hardylab.errors import ConfigurationError, HardylabError
from hardylab.oracles import evaluate
from hardylab.runner import ScenarioRunner
from hardylab.scenario import load_scenario
from hardylab.utils.reporter_loader import load_reporter
from hardylab.utils.string_utils import to_snake_case

logger = logging.getLogger("hardylab")

DEFAULT_REPORTERS = ['DefaultReporter', 'JSONReporter', 'CSVReporter']
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def parse_reporter_args(unknown_args, reporters):
    """
    Parse unknown arguments to handle reporter-specific options.

    ``--jsonreporter-indent 4`` becomes ``{'JSONReporter': {'indent': '4'}}``.
    A flag without a value is set to ``True``.

    Args:
        unknown_args (list): List of unknown command-line arguments.
        reporters (list): List of reporter names.

    Returns:
        dict: A dictionary of reporter-specific arguments.
    """
    reporter_args = {reporter: {} for reporter in reporters}
    i = 0
    while i < len(unknown_args):
        arg = unknown_args[i]
        if arg.startswith('--'):
            parts = arg[2:].split('-', 1)
            if len(parts) == 2:
                reporter_name = parts[0].lower()
                for full_reporter_name in reporters:
                    if full_reporter_name.lower().startswith(reporter_name):
                        key = to_snake_case(parts[1]).replace('-', '_')
                        if i + 1 < len(unknown_args) and not unknown_args[i + 1].startswith('--'):
                            reporter_args[full_reporter_name][key] = unknown_args[i + 1]
                            i += 1
                        else:
                            reporter_args[full_reporter_name][key] = True
                        break
        i += 1
    return reporter_args


def parse_params(pairs):
    """
    Turn ``['p=2', 'N=3']`` into ``{'p': '2', 'N': '3'}``.

    :raises ConfigurationError: For an item without ``=``.
    """
    params = {}
    for item in pairs or []:
        key, sep, value = item.partition('=')
        if not sep or not key:
            raise ConfigurationError(f"bad parameter {item!r}", [("--params", None, "expected key=value")])
        params[key.strip()] = value.strip()
    return params


def build_parser():
    parser = argparse.ArgumentParser(prog='hardylab',
                                     description='Compute capacities, Hardy weights and best constants from scenario files.')
    parser.add_argument('--log-level', default=None,
                        help='Logging level (default: $HARDYLAB_LOG_LEVEL or WARNING)')
    subparsers = parser.add_subparsers(dest='command', required=True)

    def add_run_options(sub):
        sub.add_argument('config', help='Scenario YAML file')
        sub.add_argument('-j', '--jobs', type=int, default=1,
                         help='Number of worker processes (default: 1)')
        sub.add_argument('-o', '--output-dir', default=None,
                         help='Directory for report files (default: $HARDYLAB_OUT or hardylab_reports)')
        sub.add_argument('-r', '--reporters', nargs='+', default=list(DEFAULT_REPORTERS),
                         help='Reporters to use (default: DefaultReporter JSONReporter CSVReporter)')
        sub.add_argument('-s', '--server', default='TaskServer',
                         help='Task server to use (default: TaskServer)')

    run = subparsers.add_parser('run', help='Run every task of a scenario')
    add_run_options(run)

    study = subparsers.add_parser('study', help='Run one task at increasing resolutions and extrapolate')
    add_run_options(study)
    study.add_argument('--resolutions', type=int, nargs='+', default=None,
                       help='Cells per axis, increasing (default: the scenario study block)')
    study.add_argument('--model', choices=['power', 'log'], default=None,
                       help='Extrapolation model (default: the scenario study block or power)')
    study.add_argument('--task', default=None, help='Task label to study (default: the first task)')

    oracle = subparsers.add_parser('oracle', help='Evaluate a closed-form oracle')
    oracle.add_argument('name', help='Oracle name, e.g. radial_condenser_capacity')
    oracle.add_argument('--params', nargs='*', default=[], metavar='KEY=VALUE',
                        help='Oracle parameters, e.g. p=2 N=3 r=0.5 R=1')

    validate = subparsers.add_parser('validate', help='Validate a scenario without solving anything')
    validate.add_argument('config', help='Scenario YAML file')
    return parser


def configure_logging(level_name=None):
    level_name = (level_name or os.environ.get('HARDYLAB_LOG_LEVEL', 'WARNING')).upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stdout)
    logger.setLevel(level)


def _load_reporters(names, unknown):
    reporter_args = parse_reporter_args(unknown, names)
    return [load_reporter(name, **reporter_args[name]) for name in names]


def _report_error(error):
    print(f"error: {error}", file=sys.stderr)


def main(argv=None):
    """
    The main entry point for the hardylab CLI.

    :return: Exit code: 0 when every task converged, 2 when a task completed
        without converging, 1 on configuration, domain or usage errors.
    """
    parser = build_parser()
    args, unknown = parser.parse_known_args(argv)
    configure_logging(args.log_level)

    try:
        if args.command == 'oracle':
            value = evaluate(args.name, parse_params(args.params))
            print(f"{value.value:.6f}")
            return 0

        if args.command == 'validate':
            scenario = load_scenario(args.config)
            print(f"{args.config}: ok ({len(scenario.tasks)} task(s))")
            return 0

        output_dir = args.output_dir or os.environ.get('HARDYLAB_OUT')
        reporters = _load_reporters(args.reporters, unknown)
        runner = ScenarioRunner(jobs=args.jobs, reporters=reporters, output_dir=output_dir, server=args.server)
        if args.command == 'study':
            _, exit_code = runner.study(args.config, resolutions=args.resolutions, model=args.model, task=args.task)
            return exit_code
        return runner.run(args.config).exit_code
    except HardylabError as e:
        _report_error(e)
        return 1
    except ValueError as e:
        # reporter or server lookup
        _report_error(e)
        return 1


def run():
    freeze_support()
    sys.exit(main())


if __name__ == "__main__":
    run()
