import logging
import sys
from functools import wraps

import click

from app.core.exceptions import EXIT_TOOL, RtlAgentError

logger = logging.getLogger(__name__)


def cli_errors(func):
    """Turn RtlAgentError into a one-line message and the error's exit code"""

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except RtlAgentError as e:
            logger.debug("Command failed", exc_info=True)
            click.echo(f"Error: {e.message}", err=True)
            sys.exit(e.exit_code)
        except OSError as e:
            # Filesystem trouble outside any tool call
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_TOOL)

    return wrapper
