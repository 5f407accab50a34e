"""CLI command registration"""

from rekah_sparse3d.commands.commands_utils import Settings, register_commands

__all__ = ["Settings", "register_commands"]
