"""utility modules for rekah-sparse3d"""

from rekah_sparse3d.utils.singleton_utils import SingletonInstance
from rekah_sparse3d.utils.logging_utils import Logger, logging_func
from rekah_sparse3d.utils.config_utils import (
    load_config_ini,
    get_config_value,
    get_config_int,
    get_config_float,
    get_config_bool,
    read_key_value_config,
)
from rekah_sparse3d.utils.rng_utils import derive_seed, make_rng, scene_seed
from rekah_sparse3d.utils.async_utils import map_in_threads, run_sync

__all__ = [
    "SingletonInstance",
    "Logger",
    "logging_func",
    "load_config_ini",
    "get_config_value",
    "get_config_int",
    "get_config_float",
    "get_config_bool",
    "read_key_value_config",
    "derive_seed",
    "make_rng",
    "scene_seed",
    "map_in_threads",
    "run_sync",
]
