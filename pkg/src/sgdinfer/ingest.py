"""Streaming CSV ingestion: numeric columns, one-hot categoricals, drop-row
missing handling.

The ingestion config is a line-oriented key = value file:

    response = Global_active_power
    covariate = Voltage
    covariate = Global_intensity
    categorical = time_band = 0-2|3-5|6-8      # declared category order
    categorical = day                          # discovered (extra pass)
    intercept = true
    transform = Voltage = 240.0, 3.24          # (value - center) / scale
    label = banana = 1                         # response token -> +1/-1
    label = wine = -1
    delimiter = ;
    header = true

Feature order: intercept (if any), then covariate/categorical columns in
declaration order, categoricals expanded to a full one-hot block (no
reference cell dropped).  A row missing any used field, or with an
unparseable number or an undeclared category, is skipped and counted;
``rows_read = rows_emitted + rows_skipped`` always holds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .models import Observation

__all__ = ["CsvSource", "IngestionSpec", "parse_ingestion_file"]

MISSING_TOKENS = frozenset({"", "na", "n/a", "nan", "?"})


@dataclass
class IngestionSpec:
    response: str
    columns: list[tuple[str, str]] = field(default_factory=list)  # (name, kind)
    categories: dict[str, list[str] | None] = field(default_factory=dict)
    intercept: bool = False
    label_map: dict[str, float] | None = None
    transforms: dict[str, tuple[float, float]] = field(default_factory=dict)
    delimiter: str = ","
    header: bool = True

    def __post_init__(self) -> None:
        if not self.response:
            raise ConfigError("ingestion spec needs a response column")
        names = [name for name, _ in self.columns]
        if not names:
            raise ConfigError("ingestion spec needs at least one covariate")
        if len(set(names)) != len(names):
            raise ConfigError("duplicate covariate columns in ingestion spec")
        if self.response in names:
            raise ConfigError(
                f"response column {self.response!r} also appears as a covariate"
            )
        if self.label_map is not None:
            bad = {k: v for k, v in self.label_map.items() if v not in (-1.0, 1.0)}
            if bad:
                raise ConfigError(
                    f"label mappings must target -1 or +1, got {bad}"
                )
        for name, (center, scale) in self.transforms.items():
            if scale == 0.0 or not np.isfinite(scale) or not np.isfinite(center):
                raise ConfigError(
                    f"transform for {name!r} needs finite center and nonzero scale"
                )


def parse_ingestion_file(path) -> IngestionSpec:
    response = None
    columns: list[tuple[str, str]] = []
    categories: dict[str, list[str] | None] = {}
    intercept = False
    label_map: dict[str, float] = {}
    transforms: dict[str, tuple[float, float]] = {}
    delimiter = ","
    header = True

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(
                    f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}"
                )
            key, _, value = line.partition("=")
            key, value = key.strip().lower(), value.strip()
            if key == "response":
                response = value
            elif key == "covariate":
                columns.append((value, "numeric"))
            elif key == "categorical":
                name, _, cats = value.partition("=")
                name = name.strip()
                columns.append((name, "categorical"))
                if cats.strip():
                    categories[name] = [c.strip() for c in cats.split("|")]
                else:
                    categories[name] = None  # discovered in an extra pass
            elif key == "intercept":
                intercept = _parse_bool(value, path, lineno)
            elif key == "header":
                header = _parse_bool(value, path, lineno)
            elif key == "label":
                token, _, target = value.rpartition("=")
                token, target = token.strip(), target.strip()
                if not token:
                    raise ConfigError(
                        f"{path}:{lineno}: label needs 'token = +1|-1'"
                    )
                label_map[token] = float(target)
            elif key == "transform":
                name, _, params = value.partition("=")
                parts = [s.strip() for s in params.split(",")]
                if len(parts) != 2:
                    raise ConfigError(
                        f"{path}:{lineno}: transform needs 'column = center, scale'"
                    )
                transforms[name.strip()] = (float(parts[0]), float(parts[1]))
            elif key == "delimiter":
                delimiter = {"tab": "\t", "comma": ",", "semicolon": ";"}.get(
                    value.lower(), value
                )
            else:
                raise ConfigError(f"{path}:{lineno}: unknown ingestion key {key!r}")

    if response is None:
        raise ConfigError(f"{path}: missing required key 'response'")
    return IngestionSpec(
        response=response,
        columns=columns,
        categories=categories,
        intercept=intercept,
        label_map=label_map or None,
        transforms=transforms,
        delimiter=delimiter,
        header=header,
    )


def _parse_bool(value: str, path, lineno: int) -> bool:
    low = value.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{path}:{lineno}: expected true/false, got {value!r}")


class CsvSource:
    """Iterable of Observations read from a delimited text file.

    Iterating consumes the file once (plus one extra pass up front if any
    categorical column needs its category set discovered).  After
    iteration, ``rows_read``, ``rows_emitted`` and ``rows_skipped`` hold
    the conservation counts for the run summary.
    """

    def __init__(self, path, spec: IngestionSpec):
        self.path = path
        self.spec = spec
        self.rows_read = 0
        self.rows_emitted = 0
        self.rows_skipped = 0
        self._col_index: dict[str, int] = {}
        self._categories: dict[str, list[str]] = {}
        self._prepared = False

    # -- setup -------------------------------------------------------------

    def _open(self):
        return open(self.path, "r", encoding="utf-8", newline="")

    def _resolve_columns(self, first_row: list[str]) -> None:
        spec = self.spec
        used = [spec.response] + [name for name, _ in spec.columns]
        if spec.header:
            header = [h.strip() for h in first_row]
            for name in used:
                if name in header:
                    self._col_index[name] = header.index(name)
                else:
                    raise ConfigError(
                        f"column {name!r} not found in header of {self.path}"
                    )
        else:
            for name in used:
                try:
                    idx = int(name)
                except ValueError:
                    raise ConfigError(
                        f"headerless input requires integer column references, "
                        f"got {name!r}"
                    )
                if idx < 0 or idx >= len(first_row):
                    raise ConfigError(
                        f"column index {idx} out of range for {self.path} "
                        f"({len(first_row)} columns)"
                    )
                self._col_index[name] = idx

    def _discover_categories(self) -> None:
        todo = [
            name
            for name, kind in self.spec.columns
            if kind == "categorical" and self.spec.categories.get(name) is None
        ]
        for name, kind in self.spec.columns:
            if kind == "categorical" and self.spec.categories.get(name) is not None:
                self._categories[name] = list(self.spec.categories[name])
        if not todo:
            return
        seen: dict[str, set] = {name: set() for name in todo}
        with self._open() as fh:
            reader = csv.reader(fh, delimiter=self.spec.delimiter)
            rows = iter(reader)
            if self.spec.header:
                next(rows, None)
            for row in rows:
                for name in todo:
                    idx = self._col_index[name]
                    if idx < len(row):
                        token = row[idx].strip()
                        if token.lower() not in MISSING_TOKENS:
                            seen[name].add(token)
        for name in todo:
            if not seen[name]:
                raise DataError(
                    f"categorical column {name!r} has no usable values in "
                    f"{self.path}"
                )
            self._categories[name] = sorted(seen[name])

    def _prepare(self) -> None:
        if self._prepared:
            return
        with self._open() as fh:
            reader = csv.reader(fh, delimiter=self.spec.delimiter)
            first = next(reader, None)
        if first is None:
            raise DataError(f"input file {self.path} is empty")
        self._resolve_columns(first)
        self._discover_categories()
        self._prepared = True

    # -- metadata ------------------------------------------------------------

    def feature_names(self) -> list[str]:
        self._prepare()
        names = ["intercept"] if self.spec.intercept else []
        for name, kind in self.spec.columns:
            if kind == "numeric":
                names.append(name)
            else:
                names.extend(f"{name}={cat}" for cat in self._categories[name])
        return names

    def dimension(self) -> int:
        return len(self.feature_names())

    def summary(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_emitted": self.rows_emitted,
            "rows_skipped": self.rows_skipped,
        }

    # -- iteration -----------------------------------------------------------

    def __iter__(self):
        self._prepare()
        spec = self.spec
        self.rows_read = self.rows_emitted = self.rows_skipped = 0
        dim = self.dimension()
        cat_lookup = {
            name: {c: i for i, c in enumerate(cats)}
            for name, cats in self._categories.items()
        }
        with self._open() as fh:
            reader = csv.reader(fh, delimiter=spec.delimiter)
            rows = iter(reader)
            if spec.header:
                next(rows, None)
            for row in rows:
                self.rows_read += 1
                obs = self._parse_row(row, dim, cat_lookup)
                if obs is None:
                    self.rows_skipped += 1
                else:
                    self.rows_emitted += 1
                    yield obs

    def _parse_row(self, row, dim, cat_lookup) -> Observation | None:
        spec = self.spec
        cells: dict[str, str] = {}
        for name, idx in self._col_index.items():
            if idx >= len(row):
                return None  # short row: treat the field as missing
            token = row[idx].strip()
            if token.lower() in MISSING_TOKENS:
                return None
            cells[name] = token

        raw_y = cells[spec.response]
        if spec.label_map is not None:
            if raw_y not in spec.label_map:
                raise DataError(
                    f"row {self.rows_read}: response {raw_y!r} is not in the "
                    f"label mapping {sorted(spec.label_map)}"
                )
            y = spec.label_map[raw_y]
        else:
            try:
                y = float(raw_y)
            except ValueError:
                return None

        x = np.zeros(dim, dtype=np.float64)
        pos = 0
        if spec.intercept:
            x[0] = 1.0
            pos = 1
        for name, kind in spec.columns:
            if kind == "numeric":
                try:
                    v = float(cells[name])
                except ValueError:
                    return None
                if name in spec.transforms:
                    center, scale = spec.transforms[name]
                    v = (v - center) / scale
                x[pos] = v
                pos += 1
            else:
                block = cat_lookup[name]
                slot = block.get(cells[name])
                if slot is None:
                    return None  # undeclared category under drop-row policy
                x[pos + slot] = 1.0
                pos += len(block)
        return Observation(y=y, x=x)
