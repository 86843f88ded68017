"""Loading response/expression/fingerprint tables, sensitivity labels, LCO folds."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, DomainError


@dataclass
class ResponseTable:
    """Sparse (cell, drug, AUC) observations; missing pairs are simply absent."""

    cells: list[str]
    drugs: list[str]
    cell_idx: np.ndarray
    drug_idx: np.ndarray
    auc: np.ndarray

    def __post_init__(self):
        self.cell_idx = np.asarray(self.cell_idx, dtype=np.int64)
        self.drug_idx = np.asarray(self.drug_idx, dtype=np.int64)
        self.auc = np.asarray(self.auc, dtype=np.float64)
        n = len(self.auc)
        if len(self.cell_idx) != n or len(self.drug_idx) != n:
            raise DataError("observation arrays have different lengths")
        if n:
            if self.cell_idx.min() < 0 or self.cell_idx.max() >= len(self.cells):
                raise DataError("cell index out of range")
            if self.drug_idx.min() < 0 or self.drug_idx.max() >= len(self.drugs):
                raise DataError("drug index out of range")
            if not np.all(np.isfinite(self.auc)):
                raise DataError("non-finite AUC")
            keys = self.cell_idx * len(self.drugs) + self.drug_idx
            if np.unique(keys).size != n:
                raise DataError("duplicate (cell, drug) observation")
        self._by_cell = None

    @property
    def n_obs(self) -> int:
        return len(self.auc)

    def by_cell(self) -> dict[int, np.ndarray]:
        """Observation row indices per cell, ordered by drug index."""
        if self._by_cell is None:
            order = np.lexsort((self.drug_idx, self.cell_idx))
            out: dict[int, np.ndarray] = {}
            cells_sorted = self.cell_idx[order]
            bounds = np.flatnonzero(np.diff(cells_sorted)) + 1
            for chunk in np.split(order, bounds):
                if chunk.size:
                    out[int(self.cell_idx[chunk[0]])] = chunk
            self._by_cell = out
        return self._by_cell

    def cell_list(self, cell: int):
        """``(drug indices, aucs)`` observed for one cell."""
        rows = self.by_cell().get(cell, np.empty(0, dtype=np.int64))
        return self.drug_idx[rows], self.auc[rows]

    def matrix(self) -> np.ndarray:
        """Dense cells x drugs AUC matrix with NaN for missing pairs."""
        m = np.full((len(self.cells), len(self.drugs)), np.nan)
        m[self.cell_idx, self.drug_idx] = self.auc
        return m


@dataclass
class CellProfile:
    cell_id: str
    cancer_type: str
    expression: np.ndarray


@dataclass
class DrugProfile:
    drug_id: str
    fingerprint: np.ndarray


@dataclass
class LabeledDataset:
    table: ResponseTable
    labels: np.ndarray  # per observation, 0/1
    thresholds: np.ndarray  # per cell; NaN for cells with no observations
    percentile: float = 5.0

    def cell_labels(self, cell: int) -> np.ndarray:
        rows = self.table.by_cell().get(cell, np.empty(0, dtype=np.int64))
        return self.labels[rows]

    def label_matrix(self) -> np.ndarray:
        """cells x drugs sensitivity matrix, NaN where unobserved."""
        m = np.full((len(self.table.cells), len(self.table.drugs)), np.nan)
        m[self.table.cell_idx, self.table.drug_idx] = self.labels
        return m


@dataclass
class FoldAssignment:
    folds: dict[str, int]
    seed: int
    n_folds: int = 5

    def test_cells(self, fold: int) -> list[str]:
        return [c for c, f in self.folds.items() if f == fold]

    def train_cells(self, fold: int) -> list[str]:
        return [c for c, f in self.folds.items() if f != fold]


@dataclass
class Standardizer:
    """Per-gene z-scoring fit on training cells only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0.0] = 1.0
        return cls(mean, std)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std


def _open_csv(path):
    path = Path(path)
    if not path.exists():
        raise DataError("file not found", path)
    fh = open(path, newline="", encoding="utf-8")
    return path, fh, csv.reader(fh)


def load_responses(path) -> ResponseTable:
    """Read ``cell_id,drug_id,auc`` CSV; cells/drugs indexed in first-seen order."""
    path, fh, reader = _open_csv(path)
    with fh:
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["cell_id", "drug_id", "auc"]:
            raise DataError("expected header 'cell_id,drug_id,auc'", path, 1)
        cells: dict[str, int] = {}
        drugs: dict[str, int] = {}
        seen: dict[tuple[int, int], int] = {}
        ci, di, au = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not x.strip() for x in row):
                continue
            if len(row) != 3:
                raise DataError(f"expected 3 fields, got {len(row)}", path, lineno)
            cell, drug, raw = (x.strip() for x in row)
            try:
                value = float(raw)
            except ValueError:
                raise DataError(f"non-numeric AUC {raw!r}", path, lineno) from None
            if not math.isfinite(value):
                raise DataError(f"non-finite AUC {raw!r}", path, lineno)
            c = cells.setdefault(cell, len(cells))
            d = drugs.setdefault(drug, len(drugs))
            if (c, d) in seen:
                raise DataError(
                    f"duplicate pair ({cell}, {drug}), first seen on line {seen[(c, d)]}", path, lineno
                )
            seen[(c, d)] = lineno
            ci.append(c)
            di.append(d)
            au.append(value)
    return ResponseTable(list(cells), list(drugs), np.array(ci, dtype=np.int64), np.array(di, dtype=np.int64), np.array(au))


def _load_matrix_rows(path, n_meta, prefix, meta_names):
    path, fh, reader = _open_csv(path)
    rows = []
    with fh:
        header = next(reader, None)
        if header is None:
            raise DataError("empty file, expected a header row", path, 1)
        header = [h.strip() for h in header]
        if header[:n_meta] != meta_names:
            raise DataError(f"header must start with {','.join(meta_names)}", path, 1)
        width = len(header)
        if width == n_meta:
            raise DataError(f"no {prefix}_* columns in header", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not x.strip() for x in row):
                continue
            if len(row) != width:
                raise DataError(f"expected {width} fields, got {len(row)}", path, lineno)
            try:
                values = np.array([float(x) for x in row[n_meta:]])
            except ValueError:
                raise DataError("non-numeric value", path, lineno) from None
            if not np.all(np.isfinite(values)):
                raise DataError("non-finite value", path, lineno)
            rows.append((lineno, [x.strip() for x in row[:n_meta]], values))
    return path, rows


def load_expression(path) -> list[CellProfile]:
    """Read ``cell_id,cancer_type,g_1..g_G``. Values are returned raw;
    standardization is fit per fold by the harness."""
    _, rows = _load_matrix_rows(path, 2, "g", ["cell_id", "cancer_type"])
    return [CellProfile(meta[0], meta[1], values) for _, meta, values in rows]


def load_fingerprints(path) -> list[DrugProfile]:
    """Read ``drug_id,f_1..f_B`` count fingerprints (B is 2048 for Morgan radius 3)."""
    path, rows = _load_matrix_rows(path, 1, "f", ["drug_id"])
    out = []
    for lineno, meta, values in rows:
        if np.any(values < 0):
            raise DataError("negative fingerprint count", path, lineno)
        if np.any(values != np.round(values)):
            raise DataError("fingerprint counts must be integers", path, lineno)
        out.append(DrugProfile(meta[0], values.astype(np.int64)))
    return out


def percentile_threshold(values, percentile: float) -> float:
    """Linear-interpolation percentile between order statistics (inclusive)."""
    return float(np.percentile(np.asarray(values, dtype=np.float64), percentile, method="linear"))


def label_sensitivity(table: ResponseTable, percentile: float = 5.0) -> LabeledDataset:
    """Per cell, label a drug sensitive iff its AUC is at or below the cell's
    ``percentile``-th AUC percentile. Ties at the threshold are all sensitive."""
    if not 0 < percentile < 100:
        raise DomainError("percentile must be in (0,100)")
    labels = np.zeros(table.n_obs, dtype=np.int64)
    thresholds = np.full(len(table.cells), np.nan)
    for cell, rows in table.by_cell().items():
        t = percentile_threshold(table.auc[rows], percentile)
        thresholds[cell] = t
        labels[rows] = table.auc[rows] <= t
    return LabeledDataset(table, labels, thresholds, percentile)


def make_lco_folds(cells: Sequence[CellProfile], n_folds: int = 5, seed: int = 0) -> FoldAssignment:
    """Stratified leave-cell-lines-out split.

    Within each cancer type (visited in sorted order) cells are shuffled with
    ``seed`` and dealt round-robin. The dealer position carries over between
    types so fold totals stay balanced as well.
    """
    if n_folds < 2:
        raise DomainError("n_folds must be >= 2")
    by_type: dict[str, list[str]] = {}
    for c in cells:
        if not c.cancer_type:
            raise DomainError(f"cell {c.cell_id} has no cancer type")
        by_type.setdefault(c.cancer_type, []).append(c.cell_id)
    rng = np.random.default_rng(seed)
    folds: dict[str, int] = {}
    dealer = 0
    for ctype in sorted(by_type):
        members = sorted(by_type[ctype])
        for j in rng.permutation(len(members)):
            folds[members[j]] = dealer % n_folds
            dealer += 1
    order = {c.cell_id: i for i, c in enumerate(cells)}
    folds = dict(sorted(folds.items(), key=lambda kv: order[kv[0]]))
    return FoldAssignment(folds, seed, n_folds)


def write_folds(assignment: FoldAssignment, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id", "fold"])
        for cell, fold in assignment.folds.items():
            w.writerow([cell, fold])


def read_folds(path, seed: int = -1) -> FoldAssignment:
    path, fh, reader = _open_csv(path)
    with fh:
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["cell_id", "fold"]:
            raise DataError("expected header 'cell_id,fold'", path, 1)
        folds = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"expected 2 fields, got {len(row)}", path, lineno)
            try:
                folds[row[0].strip()] = int(row[1])
            except ValueError:
                raise DataError(f"bad fold index {row[1]!r}", path, lineno) from None
    n = max(folds.values()) + 1 if folds else 0
    return FoldAssignment(folds, seed, n)


@dataclass
class Corpus:
    """Everything the harness needs, aligned by index.

    ``table.cells`` / ``table.drugs`` define the index order; ``expression``
    and ``fingerprints`` are rows in that order.
    """

    labeled: LabeledDataset
    cell_types: list[str]
    expression: np.ndarray  # [n_cells, G], raw
    fingerprints: np.ndarray  # [n_drugs, B]

    @property
    def table(self) -> ResponseTable:
        return self.labeled.table

    def cell_index(self, ids: Sequence[str]) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.table.cells)}
        return np.array([lookup[c] for c in ids if c in lookup], dtype=np.int64)


def assemble(table: ResponseTable, cells: Sequence[CellProfile], drugs: Sequence[DrugProfile], percentile: float = 5.0) -> Corpus:
    """Join the three inputs; responses referencing unknown cells/drugs are a data error."""
    cmap = {c.cell_id: c for c in cells}
    dmap = {d.drug_id: d for d in drugs}
    missing_c = [c for c in table.cells if c not in cmap]
    missing_d = [d for d in table.drugs if d not in dmap]
    if missing_c:
        raise DataError(f"responses reference cells without expression: {missing_c[:5]}")
    if missing_d:
        raise DataError(f"responses reference drugs without fingerprints: {missing_d[:5]}")
    if len({len(c.expression) for c in cells}) > 1:
        raise DataError("expression profiles have inconsistent lengths")
    if len({len(d.fingerprint) for d in drugs}) > 1:
        raise DataError("fingerprints have inconsistent lengths")
    X = np.stack([cmap[c].expression for c in table.cells]).astype(np.float64)
    F = np.stack([dmap[d].fingerprint for d in table.drugs]).astype(np.float64)
    types = [cmap[c].cancer_type for c in table.cells]
    return Corpus(label_sensitivity(table, percentile), types, X, F)
