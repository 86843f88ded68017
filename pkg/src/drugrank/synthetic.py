"""Planted bilinear benchmark used by the acceptance suite and the CLI.

Cells are grouped into cancer types; expression is a type centroid plus
within-type variation in a few latent programs, mapped to genes, plus noise.
Each drug has a random sparse count fingerprint. Hidden linear maps take the
programs to a low-rank cell factor and fingerprints to a drug factor; the
true score is their inner product plus a per-drug potency term (the same
bilinear form with a constant extra cell coordinate). Observed AUC is
``sigmoid(-true_score)`` plus small noise, so a lower AUC means a more
sensitive drug.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import CellProfile, DrugProfile, ResponseTable


@dataclass
class PlantedData:
    cells: list[CellProfile]
    drugs: list[DrugProfile]
    responses: ResponseTable
    true_scores: np.ndarray  # [n_cells, n_drugs], higher = more sensitive


def make_planted(
    n_cells: int = 100,
    n_drugs: int = 60,
    n_types: int = 4,
    n_genes: int = 128,
    n_bits: int = 32,
    rank: int = 2,
    missing: float = 0.15,
    n_programs: int = 8,
    within_type: float = 0.4,
    expr_noise: float = 0.2,
    auc_noise: float = 0.01,
    bits_on: int = 6,
    unit_factors: bool = False,
    potency: float = 1.5,
    scale: float = 1.0,
    seed: int = 0,
) -> PlantedData:
    rng = np.random.default_rng(seed)
    # expression = type centroid + within-type variation, both living in a
    # low-dimensional program space, plus isotropic gene noise
    centroids = rng.normal(0.0, 1.0, size=(n_types, n_programs))
    types = np.arange(n_cells) % n_types
    rng.shuffle(types)
    Z = centroids[types] + within_type * rng.normal(size=(n_cells, n_programs))
    loadings = rng.normal(size=(n_programs, n_genes)) / np.sqrt(n_programs)
    X = Z @ loadings + expr_noise * rng.normal(size=(n_cells, n_genes))

    F = np.zeros((n_drugs, n_bits))
    for d in range(n_drugs):
        on = rng.choice(n_bits, size=bits_on, replace=False)
        F[d, on] = rng.integers(1, 4, size=bits_on)

    A = rng.normal(size=(rank, n_programs)) / np.sqrt(n_programs)
    B = rng.normal(size=(rank, n_bits)) / np.sqrt(bits_on)
    U = Z @ A.T
    V = F @ B.T
    if unit_factors:
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        V /= np.linalg.norm(V, axis=1, keepdims=True)
    true = U @ V.T
    if potency:
        true += potency * (F @ rng.normal(size=n_bits) / np.sqrt(bits_on))[None, :]
    true = scale * (true - true.mean()) / true.std()

    auc = 1.0 / (1.0 + np.exp(true)) + auc_noise * rng.normal(size=true.shape)
    observed = rng.random(size=true.shape) >= missing
    observed[np.arange(n_cells), rng.integers(0, n_drugs, size=n_cells)] = True

    cell_ids = [f"C{i:04d}" for i in range(n_cells)]
    drug_ids = [f"D{j:04d}" for j in range(n_drugs)]
    ci, di = np.nonzero(observed)
    table = ResponseTable(cell_ids, drug_ids, ci, di, auc[ci, di])
    cells = [CellProfile(cell_ids[i], f"T{types[i]}", X[i]) for i in range(n_cells)]
    drugs = [DrugProfile(drug_ids[j], F[j].astype(np.int64)) for j in range(n_drugs)]
    return PlantedData(cells, drugs, table, true)


def write_csvs(data: PlantedData, out_dir) -> dict[str, Path]:
    """Writes responses/expression/fingerprints/true_scores CSVs; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "responses": out / "responses.csv",
        "expression": out / "expression.csv",
        "fingerprints": out / "fingerprints.csv",
        "true_scores": out / "true_scores.csv",
    }
    t = data.responses
    with open(paths["responses"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id", "drug_id", "auc"])
        for c, d, a in zip(t.cell_idx, t.drug_idx, t.auc):
            w.writerow([t.cells[c], t.drugs[d], repr(float(a))])
    with open(paths["expression"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        n_genes = len(data.cells[0].expression)
        w.writerow(["cell_id", "cancer_type"] + [f"g_{i + 1}" for i in range(n_genes)])
        for c in data.cells:
            w.writerow([c.cell_id, c.cancer_type] + [repr(float(v)) for v in c.expression])
    with open(paths["fingerprints"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        n_bits = len(data.drugs[0].fingerprint)
        w.writerow(["drug_id"] + [f"f_{i + 1}" for i in range(n_bits)])
        for d in data.drugs:
            w.writerow([d.drug_id] + [int(v) for v in d.fingerprint])
    with open(paths["true_scores"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id", "drug_id", "true_score"])
        for i, c in enumerate(t.cells):
            for j, d in enumerate(t.drugs):
                w.writerow([c, d, repr(float(data.true_scores[i, j]))])
    return paths
