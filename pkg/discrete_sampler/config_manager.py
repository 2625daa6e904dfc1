import os
import json
import polars as pl
from typing import Any, Dict
from dotenv import load_dotenv

from discrete_sampler import logger
from discrete_sampler.exceptions import ConfigError

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


class ConfigManager:
    CONFIG_PATH_DEFAULT = os.path.join(PROJECT_ROOT, 'config.json')
    SCHEMA_PATH_DEFAULT = os.path.join(PROJECT_ROOT, 'schema.json')
    json_to_polars_types = {
        "str": pl.Utf8,
        "int64": pl.Int64,
        "bool": pl.Boolean,
        "float64": pl.Float64,
    }
    def __init__(self, config_path = CONFIG_PATH_DEFAULT, schema_path = SCHEMA_PATH_DEFAULT) -> None:
        self.config = self.load_json(config_path)
        load_dotenv()

        self._initialize_schema_config(schema_path)
        self._initialize_output_config()
        self._initialize_numerics_config()
        self._initialize_presets_config()
        self._initialize_validation_config()

    def _initialize_schema_config(self, schema_path) -> None:
        self.schema = self.load_polars_schema(schema_path)
        self.TRAJECTORY_ODE_SCHEMA = self.schema.get('TRAJECTORY_ODE', {})
        self.TRAJECTORY_JUMP_SCHEMA = self.schema.get('TRAJECTORY_JUMP', {})
        self.SCALING_SCHEMA = self.schema.get('SCALING', {})

    def _initialize_output_config(self) -> None:
        self.OUTPUT_DIR = os.environ.get('AMCMC_OUTPUT_DIR') or self.config.get('OUTPUT_DIR', 'outputs')
        self.TRAJECTORY_CSV_FORMAT = '{name}_{mode}_{label}.csv'
        self.MANIFEST_FILE = 'manifest.json'
        self.SPECTRUM_FILE = 'spectrum.json'
        self.SCALING_CSV = 'scaling.csv'

    def _initialize_numerics_config(self) -> None:
        self.NUMERICS = self.config.get('NUMERICS', {})
        self.DT_MIN = self.NUMERICS.get('DT_MIN', 1e-12)
        self.MAX_HYPERCUBE_DIM = self.NUMERICS.get('MAX_HYPERCUBE_DIM', 16)
        self.RESTART_THRESHOLD = self.NUMERICS.get('RESTART_THRESHOLD', 0.0)
        self.KERNEL_RTOL = self.NUMERICS.get('KERNEL_RTOL', 1e-12)
        self.FINITE_DIFFERENCE_STEP = self.NUMERICS.get('FINITE_DIFFERENCE_STEP', 1e-6)

    def _initialize_presets_config(self) -> None:
        self.PRESETS = self.config.get('PRESETS', {})

    def _initialize_validation_config(self) -> None:
        self.VALIDATION = self.config.get('VALIDATION', {})
        self.VALIDATION_TRIALS = self.VALIDATION.get('TRIALS', 20)
        self.VALIDATION_MAX_STATES = self.VALIDATION.get('MAX_STATES', 8)
        self.VALIDATION_SEED = self.VALIDATION.get('SEED', 0)

    def get_preset(self, name: str) -> Dict[str, Any]:
        if name not in self.PRESETS:
            logger.error(f"Error: Unknown preset {name}.")
            raise ConfigError(f"unknown preset {name!r}, expected one of {sorted(self.PRESETS)}")
        return dict(self.PRESETS[name], name=name)

    def get_trajectory_csv_path(self, output_dir, name, mode, label):
        return os.path.join(output_dir, self.TRAJECTORY_CSV_FORMAT.format(name=name, mode=mode, label=label))

    def load_json(self, path: str, encoding: str = 'utf-8') -> dict:
        try:
            with open(path, 'r', encoding=encoding) as f:
                return json.load(f)
        except FileNotFoundError:
            logger.error(f"Error: The file {path} does not exist.")
            return {}
        except json.JSONDecodeError:
            logger.error(f"Error: The file {path} is not a valid JSON.")
            return {}

    def load_polars_schema(self, path: str, encoding: str = 'utf-8') -> Dict[str, Dict[str, pl.DataType]]:
        schemas_json = self.load_json(path, encoding)

        schemas_polars = {}
        for schema_name, schema in schemas_json.items():
            schemas_polars[schema_name] = {col: self.json_to_polars_types[dtype] for col, dtype in schema.items()}

        return schemas_polars
