import hashlib
import json
import math

import numpy as np


class Helper:
    def __init__(self) -> None:
        pass

    def canonical_json(self, payload) -> str:
        return json.dumps(payload, sort_keys=True, separators=(',', ':'), allow_nan=True)

    def content_hash(self, payload) -> str:
        """SHA-1 of the canonical JSON, framed like a git blob."""
        data = self.canonical_json(payload).encode('utf-8')
        return hashlib.sha1(b'blob %d\0' % len(data) + data).hexdigest()

    def _parse_int(self, part: str) -> int:
        # accepts 1e4 style counts, rejects fractions
        try:
            return int(part)
        except ValueError:
            value = float(part)
            if not value.is_integer():
                raise ValueError(f'{part!r} is not an integer')
            return int(value)

    def parse_int_list(self, text: str):
        try:
            values = [self._parse_int(part.strip()) for part in text.split(',') if part.strip()]
        except ValueError:
            raise ValueError(f'expected a comma separated list of integers, got {text!r}')
        if not values:
            raise ValueError('expected at least one integer')
        return values

    def log_log_slope(self, x, y) -> float:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        mask = (x > 0) & (y > 0)
        if mask.sum() < 2:
            return math.nan
        slope, _ = np.polyfit(np.log(x[mask]), np.log(y[mask]), 1)
        return float(slope)

    def to_jsonable(self, value):
        # numpy scalars and arrays nested in configs or reports
        if isinstance(value, dict):
            return {str(k): self.to_jsonable(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [self.to_jsonable(v) for v in value]
        if isinstance(value, np.ndarray):
            return self.to_jsonable(value.tolist())
        if isinstance(value, np.generic):
            return value.item()
        return value
