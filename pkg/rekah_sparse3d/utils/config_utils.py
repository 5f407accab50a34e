"""configuration management utilities

two sources:
- config.ini in the working directory (auto-loaded, [logging] level)
- --config files passed to commands: key=value text read into a fresh parser
"""

import os
import configparser
from typing import Optional

global_config = configparser.ConfigParser()

TOOL_SECTION = "tool"


def load_config_ini(config_path: str = "./config.ini") -> None:
    """load configuration file

    Args:
        config_path: path to config.ini file
    """
    if os.path.exists(config_path):
        global_config.read(config_path, encoding="utf-8")


def get_config_value(section: str, key: str, default=None, config: Optional[configparser.ConfigParser] = None):
    """get configuration value

    Args:
        section: config section name
        key: config key name
        default: default value if not found
        config: parser to read from (defaults to the global config.ini parser)

    Returns:
        config value or default
    """
    parser = global_config if config is None else config
    try:
        return parser.get(section, key)
    except (configparser.NoSectionError, configparser.NoOptionError):
        return default


def get_config_int(section: str, key: str, default: int = 0, config: Optional[configparser.ConfigParser] = None) -> int:
    """get configuration value as integer"""
    value = get_config_value(section, key, config=config)
    if value is None:
        return default
    return int(value)


def get_config_float(section: str, key: str, default: float = 0.0, config: Optional[configparser.ConfigParser] = None) -> float:
    """get configuration value as float"""
    value = get_config_value(section, key, config=config)
    if value is None:
        return default
    return float(value)


def get_config_bool(section: str, key: str, default: bool = False, config: Optional[configparser.ConfigParser] = None) -> bool:
    """get configuration value as boolean"""
    value = get_config_value(section, key, config=config)
    if value is None:
        return default
    return value.lower() in ("true", "1", "yes", "on")


def read_key_value_config(config_path: str) -> configparser.ConfigParser:
    """read a key=value config file into a new parser

    a [tool] header is implied when the file has no section of its own.

    Args:
        config_path: path to the config file

    Returns:
        parser with every key available under the "tool" section
    """
    with open(config_path, "r", encoding="utf-8") as f:
        text = f.read()

    has_section = any(line.strip().startswith("[") for line in text.splitlines())
    if not has_section:
        text = f"[{TOOL_SECTION}]\n" + text

    parser = configparser.ConfigParser()
    parser.read_string(text, source=config_path)
    if parser.sections() and TOOL_SECTION not in parser.sections():
        # fold every section into [tool]
        merged = {k: v for section in parser.sections() for k, v in parser.items(section)}
        parser = configparser.ConfigParser()
        parser.read_dict({TOOL_SECTION: merged})
    return parser


# auto-load on import
load_config_ini()
