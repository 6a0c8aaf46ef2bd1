"""Command line driver: finsler_run.py <subcommand> --config <file|catalog> [options]"""
import sys

from finslerlab import cli_reports

exit_code, _ = cli_reports.run_command(sys.argv[1:])
sys.exit(exit_code)
