"""Tabular data container used throughout the pipeline.

Thin wrapper around a pandas DataFrame that also carries the label-encoder
mappings produced by preprocessing. CSV convention: header row, UTF-8,
"." decimal separator, empty cell = missing.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import MissingColumn, NonNumericInput, ValidationError


class DataTable:
    def __init__(self, df: pd.DataFrame, encoders: dict[str, dict[str, int]] | None = None):
        if df.columns.duplicated().any():
            raise ValidationError("duplicate column names")
        self.df = df.reset_index(drop=True)
        # variable -> {category: integer code}, populated by preprocessing
        self.encoders: dict[str, dict[str, int]] = encoders or {}

    # -- shape -------------------------------------------------------------

    @property
    def columns(self) -> list[str]:
        return [str(c) for c in self.df.columns]

    @property
    def shape(self) -> dict[str, int]:
        return {"M": self.df.shape[1], "N": self.df.shape[0]}

    def __len__(self) -> int:
        return len(self.df)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DataTable):
            return NotImplemented
        return self.df.equals(other.df) and self.encoders == other.encoders

    # -- access ------------------------------------------------------------

    def row(self, i: int) -> dict[str, object]:
        return {str(k): v for k, v in self.df.iloc[i].items()}

    def column(self, name: str) -> pd.Series:
        if name not in self.df.columns:
            raise MissingColumn(f"column {name!r} not in table")
        return self.df[name]

    def numeric_matrix(self, columns: list[str] | None = None) -> np.ndarray:
        """Float matrix over the given columns; raises on non-numeric content."""
        cols = columns if columns is not None else self.columns
        for c in cols:
            if c not in self.df.columns:
                raise MissingColumn(f"column {c!r} not in table")
        sub = self.df[cols]
        try:
            return sub.to_numpy(dtype=float)
        except (TypeError, ValueError) as e:
            bad = [c for c in cols if not pd.api.types.is_numeric_dtype(sub[c])]
            raise NonNumericInput(f"non-numeric columns: {bad}") from e

    def decode(self, column: str, code: int) -> str:
        """Inverse of the label encoding for a categorical column."""
        mapping = self.encoders.get(column)
        if mapping is None:
            raise MissingColumn(f"column {column!r} has no encoder")
        for cat, c in mapping.items():
            if c == code:
                return cat
        raise ValidationError(f"code {code} not present in encoder for {column!r}")

    def content_hash(self) -> str:
        csv_bytes = self.df.to_csv(index=False).encode("utf-8")
        return hashlib.sha256(csv_bytes).hexdigest()

    # -- construction / serialization --------------------------------------

    @classmethod
    def from_records(cls, columns: list[str], rows: list[list], encoders=None) -> "DataTable":
        for r in rows:
            if len(r) != len(columns):
                raise ValidationError(f"row has {len(r)} cells, expected {len(columns)}")
        return cls(pd.DataFrame(rows, columns=columns), encoders)

    def to_records(self) -> tuple[list[str], list[list]]:
        rows = self.df.where(pd.notna(self.df), None).to_numpy().tolist()
        return self.columns, rows

    @classmethod
    def from_csv(cls, path: str | Path) -> "DataTable":
        df = pd.read_csv(path, encoding="utf-8")
        return cls(df)

    def to_csv(self, path: str | Path) -> None:
        self.df.to_csv(path, index=False, encoding="utf-8")

    def to_dict(self) -> dict:
        columns, rows = self.to_records()
        return {"columns": columns, "rows": rows, "encoders": self.encoders}

    @classmethod
    def from_dict(cls, d: dict) -> "DataTable":
        return cls.from_records(d["columns"], d["rows"], d.get("encoders") or {})
