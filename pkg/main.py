"""
Command-line entry point.

This module parses the subcommand, pins the BLAS thread pools to the
requested thread count (before numpy is imported, or the setting has no
effect), runs the command and maps failures to exit codes:
0 on success, 2 for toolkit errors, 1 for anything unexpected.

LAB-BNN Toolkit
"""

import os
import sys
from typing import List, Optional

from cli.parser import build_parser
from config.settings import settings
from utils.exceptions import ConfigError, LabnnException
from utils.logger import get_logger, log_banner

logger = get_logger(__name__)

THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads or settings.DEFAULT_THREADS
    for name in THREAD_VARIABLES:
        os.environ.setdefault(name, str(threads))

    from cli.commands import run

    log_banner(logger, f"🚀 {settings.APP_NAME} v{settings.APP_VERSION}: {args.command} ({threads} threads)")
    try:
        run(args)
    except ConfigError as e:
        logger.error(f"✗ {e}")
        print(f"error: {e}" + (f" [key: {e.key}]" if e.key else ""), file=sys.stderr)
        return 2
    except LabnnException as e:
        logger.error(f"✗ {type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"✗ Unhandled exception: {e}", exc_info=True)
        print(f"error: {e}" if settings.DEBUG else "error: unexpected failure, see log", file=sys.stderr)
        return 1
    log_banner(logger, f"🛑 {args.command} finished")
    return 0


if __name__ == "__main__":
    sys.exit(main())
