import polars as pl
import os
import json
from typing import Any, Dict, Optional

from discrete_sampler import logger

FLOAT_PRECISION = 16


class DataStorage:
    def __init__(self):
        pass

    def _output_schema(self, df, schema):
        for column, dtype in schema.items():
            if column not in df.columns:
                continue
            if dtype == pl.Utf8:
                df = df.with_columns(pl.col(column).fill_null("").cast(dtype, strict=False))
            else:
                df = df.with_columns(pl.col(column).cast(dtype, strict=False))

        return df.select([col for col in schema if col in df.columns] + [col for col in df.columns if col not in schema])

    def _ensure_dir(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)

    def read_csv(self, path: str, schema: Optional[Dict[str, pl.DataType]] = None) -> pl.DataFrame:
        logger.info(f'Reading CSV from: {path}')

        if not os.path.exists(path):
            logger.warning(f'CSV file not found: {path}')
            return pl.DataFrame()

        # NaN round-trips as the literal 'NaN' which polars only parses with an explicit dtype
        return pl.read_csv(path, schema_overrides=schema) if schema else pl.read_csv(path)

    def output_csv(
            self,
            path: str,
            df: pl.DataFrame,
            schema: Optional[Dict[str, pl.DataType]] = None,
            mode: str = 'overwrite',
        ) -> None:
        logger.info(f'Outputting CSV to: {path}')
        self._ensure_dir(path)

        if schema:
            df = self._output_schema(df, schema)

        if mode == 'append' and os.path.exists(path):
            df = pl.concat([self.read_csv(path, schema=schema), df])
        elif mode not in ('append', 'overwrite'):
            logger.error(f'Invalid mode: {mode}')
            raise ValueError(f"Invalid mode: {mode}. Use 'overwrite' or 'append'.")

        try:
            df.write_csv(path, float_scientific=True, float_precision=FLOAT_PRECISION)
            logger.info(f'Successfully wrote {df.height} rows in {mode} mode')
        except Exception as e:
            logger.error(f"Error writing CSV: {e}")
            raise

    def output_json(self, path: str, payload: Dict[str, Any]) -> None:
        logger.info(f'Outputting JSON to: {path}')
        self._ensure_dir(path)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2, sort_keys=True, allow_nan=True)
            f.write('\n')

    def read_json(self, path: str) -> Dict[str, Any]:
        if not os.path.exists(path):
            logger.warning(f'JSON file not found: {path}')
            return {}
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
