"""CSV ingestion and JSON (de)serialisation of fitted models and reports."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError
from .family import ComponentParams, MixtureModel, ScaleLaw

SCHEMA_VERSION = 1
MISSING_TOKENS = frozenset({"", "na", "nan"})


@dataclass
class Dataset:
    """Numeric table with NaN for missing cells.

    ``tokens`` keeps the raw text of every retained row so that observed
    cells can be written back verbatim; ``row_index`` maps retained rows to
    their 0-based data-row position in the file.
    """

    columns: list
    X: np.ndarray
    tokens: list
    row_index: np.ndarray
    dropped_rows: list = field(default_factory=list)
    log_transformed: bool = False
    all_tokens: list = field(default_factory=list)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def missing_rates(self):
        """Fraction of missing cells per column (retained rows only)."""
        return np.isnan(self.X).mean(axis=0)

    @property
    def patterns(self):
        """Map row -> tuple of missing column indices, for incomplete rows only."""
        miss = np.isnan(self.X)
        return {int(i): tuple(np.flatnonzero(miss[i])) for i in np.flatnonzero(miss.any(axis=1))}


def _is_missing(tok):
    return tok.strip().lower() in MISSING_TOKENS


def load_csv(path, header=True, log_transform=False, delimiter=","):
    """Read a numeric CSV with missing markers ``''``, ``NA``, ``NaN``.

    Rows with every cell missing are dropped (with a warning).  With
    ``log_transform`` every observed value must be strictly positive and is
    replaced by its natural log.  Errors carry 1-based file line and column
    numbers.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    if not rows:
        raise DataError(f"{path}: empty file")
    if header:
        columns = [c.strip() for c in rows[0]]
        body = rows[1:]
        first_line = 2
    else:
        columns = [f"x{j + 1}" for j in range(len(rows[0]))]
        body = rows
        first_line = 1
    p = len(columns)
    if p < 1:
        raise DataError(f"{path}: no columns")
    values, tokens, keep, dropped, all_tokens = [], [], [], [], []
    for i, row in enumerate(body):
        line = first_line + i
        if len(row) == 0:
            continue
        if len(row) != p:
            raise DataError(f"{path}: line {line} has {len(row)} fields, expected {p}")
        vals = []
        for j, tok in enumerate(row):
            if _is_missing(tok):
                vals.append(np.nan)
                continue
            try:
                v = float(tok)
            except ValueError:
                raise DataError(f"{path}: line {line}, column {j + 1}: non-numeric value {tok!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: line {line}, column {j + 1}: non-finite value {tok!r}")
            if log_transform:
                if v <= 0:
                    raise DataError(f"{path}: line {line}, column {j + 1}: log transform needs a "
                                    f"positive value, got {tok!r}")
                v = math.log(v)
            vals.append(v)
        all_tokens.append(list(row))
        if all(math.isnan(v) for v in vals):
            dropped.append(len(all_tokens) - 1)
            continue
        values.append(vals)
        tokens.append(list(row))
        keep.append(len(all_tokens) - 1)
    if dropped:
        warnings.warn(f"{path}: dropped {len(dropped)} rows with no observed value")
    if not values:
        raise DataError(f"{path}: no usable rows")
    return Dataset(columns, np.array(values, dtype=float), tokens, np.array(keep, dtype=int),
                   dropped, log_transform, all_tokens)


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def format_float(v):
    return "%.17g" % v


def write_imputed_csv(path, dataset: Dataset, imputed, fill_dropped=None):
    """Write the completed table: observed tokens verbatim, imputations at 17 digits.

    ``imputed`` is on the analysis scale; with a log-transformed dataset it
    is mapped back with ``exp``.  ``fill_dropped`` (analysis scale) fills
    rows that were entirely missing; if None they are written unchanged.
    """
    back = np.exp if dataset.log_transformed else (lambda v: v)
    out_rows = [list(r) for r in dataset.all_tokens]
    for k, src in enumerate(dataset.row_index):
        row = out_rows[src]
        for j, tok in enumerate(row):
            if _is_missing(tok):
                row[j] = format_float(back(imputed[k, j]))
    if fill_dropped is not None:
        for src in dataset.dropped_rows:
            out_rows[src] = [format_float(back(v)) for v in fill_dropped]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(dataset.columns)
        w.writerows(out_rows)


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def model_to_dict(model: MixtureModel):
    return {
        "family": model.laws[0].label,
        "weights": model.weights.tolist(),
        "components": [
            dict(c.to_dict(), theta=law.theta) for c, law in zip(model.components, model.laws)
        ],
    }


def model_from_dict(d) -> MixtureModel:
    comps, laws = [], []
    for c in d["components"]:
        comps.append(ComponentParams.from_dict(c))
        laws.append(ScaleLaw.from_name(d["family"], c.get("theta")))
    w = np.asarray(d["weights"], dtype=float)
    return MixtureModel(tuple(comps), tuple(laws), w)
