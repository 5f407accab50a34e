"""command-line entry point for rekah-sparse3d

exit codes: 0 success, 1 validation or usage error, 2 I/O error.
"""

import sys
from typing import List, Optional

import typer

from rekah_sparse3d.commands.commands_utils import register_commands
from rekah_sparse3d.utils.errors_utils import ToolIOError, ValidationError
from rekah_sparse3d.utils.logging_utils import Logger

app = typer.Typer(
    name="rekah-sparse3d",
    help="Road-aware patch augmentation and prototype-based pseudo-label filtering.",
    no_args_is_help=True,
    add_completion=False,
)


@app.callback()
def _global_options(
    quiet: bool = typer.Option(False, "--quiet", help="only log warnings and errors"),
):
    if quiet:
        Logger.instance().set_level("WARNING")


register_commands(app)

# typer re-exports click's exceptions or ships its own copies depending on version
USAGE_ERROR = next(cls for cls in typer.BadParameter.__mro__ if cls.__name__ == "UsageError")


def main(argv: Optional[List[str]] = None) -> int:
    """run one command and map its outcome to an exit code"""
    args = sys.argv[1:] if argv is None else list(argv)
    logger = Logger.instance()
    try:
        result = typer.main.get_command(app).main(args=args, prog_name="rekah-sparse3d", standalone_mode=False)
    except USAGE_ERROR as e:
        e.show()
        return 1
    except typer.Abort:
        logger.error("aborted")
        return 1
    except ValidationError as e:
        logger.error(str(e))
        return 1
    except (ToolIOError, OSError) as e:
        logger.error(str(e))
        return 2
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())
