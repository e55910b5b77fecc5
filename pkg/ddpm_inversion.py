# V0.1.0
import argparse
import logging
import os
import sys
from typing import List, Optional

from core.config_manager import ConfigManager
from core.default_config import CONSTANTS, EXPERIMENT_KINDS
from core.errors import EditFriendlyError
from core.experiments import ExperimentRunner
from core.logging_utils import LoggerSetup

# Define base paths
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
CONFIG_PATH = os.path.join(BASE_DIR, 'config', 'config.json')

EXIT_OK = 0
EXIT_INTERRUPTED = 130


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Edit-friendly DDPM noise-space experiments on analytic denoisers')
    parser.add_argument('kind', nargs='?', choices=EXPERIMENT_KINDS,
                        help='experiment to run (default: experiment.kind from the config)')
    parser.add_argument('--config', type=str, default=None,
                        help='JSON config or a manifest.json from an earlier run')
    parser.add_argument('--seed', type=int, help='root seed')
    parser.add_argument('--out', type=str, help='output directory')
    parser.add_argument('--samples', type=int, help='replications / samples per experiment')
    parser.add_argument('--steps', type=int, help='respaced number of steps K')
    parser.add_argument('--eta', type=float, help='eta of the sampling schedule')
    parser.add_argument('--workers', type=int, help='worker threads for replications')
    parser.add_argument('--method', choices=['edit-friendly', 'cyclediffusion', 'ddim'],
                        help='inversion method for invert/reconstruct')
    parser.add_argument('--latent', type=str, help='latent file to write (invert, sample) or read (reconstruct)')
    parser.add_argument('--no-plots', action='store_true', help='skip SVG plots')
    parser.add_argument('--progress', action='store_true', help='show progress bars')
    parser.add_argument('--log-level', type=str, help='DEBUG, INFO, WARNING, ...')
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict:
    """CLI flags as a config fragment; unset flags leave the config alone"""
    experiment = {
        'seed': args.seed,
        'output_directory': args.out,
        'samples': args.samples,
        'workers': args.workers,
        'method': args.method,
        'latent': args.latent,
        'plots': False if args.no_plots else None,
        'progress': True if args.progress else None,
    }
    overrides = {'experiment': {key: value for key, value in experiment.items() if value is not None}}
    schedule = {'respacing': args.steps, 'eta': args.eta}
    overrides['schedule'] = {key: value for key, value in schedule.items() if value is not None}
    if args.log_level:
        overrides['logging'] = {'level': args.log_level.upper()}
    return overrides


def summary_line(kind: str, summary: dict) -> str:
    if kind == 'reconstruct':
        return f"max abs reconstruction error: {summary['max_abs_error']:.3e}"
    return f"{kind}: " + ", ".join(f"{key}={value}" for key, value in summary.items())


def main(argv: Optional[List[str]] = None) -> int:
    """Main function; returns the process exit status"""
    args = build_parser().parse_args(argv)
    config_path = args.config or CONFIG_PATH
    logger = None
    try:
        # Configuration first: it names the log directory
        config_manager = ConfigManager(config_path, logging.getLogger(CONSTANTS['LOGGER_NAME']), args.kind,
                                       overrides_from_args(args), required=args.config is not None)
        config_manager.validate()
        logger = LoggerSetup.setup_logger(CONSTANTS['LOGGER_NAME'], config_manager.get_log_directory(),
                                          CONSTANTS['LOG_FILE_NAME'], config_manager.get_log_level())
        config_manager.logger = logger

        runner = ExperimentRunner(config_manager, logger)
        result = runner.run()
        print(summary_line(result.kind, result.summary))
        logger.info(f"Manifest written to {result.manifest_path}")
        return EXIT_OK
    except EditFriendlyError as e:
        message = f"{type(e).__name__}: {e}"
        if logger:
            logger.error(message)
        else:
            print(message, file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        if logger:
            logger.info("Interrupted")
        return EXIT_INTERRUPTED
    finally:
        LoggerSetup.close_logger(CONSTANTS['LOGGER_NAME'])


if __name__ == "__main__":
    sys.exit(main())
