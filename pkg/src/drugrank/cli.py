"""Command-line front end: ``drugrank <command> [options]``.

Commands share one option set (see ``--help``); values come from the
defaults, then ``--config FILE``, then explicit flags. Every command writes
``provenance/<command>.json`` into the output directory with the resolved
config, the seed, and a sha256 of each input file.

Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis as an
from . import checkpoint
from .data import (
    CellProfile,
    Corpus,
    assemble,
    load_expression,
    load_fingerprints,
    load_responses,
    make_lco_folds,
    read_folds,
    write_folds,
)
from .errors import ConfigError, DataError, DomainError, ShapeError, TrainingDivergence
from .experiment import (
    PretrainedEncoder,
    TrainedModel,
    evaluate_fold,
    fold_seed,
    pretrain_fold,
    split_indices,
    train_fold,
)
from .metrics import aggregate, metric_names
from .synthetic import make_planted, write_csvs

log = logging.getLogger("drugrank")

EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 2, 3, 4
COMMANDS = ("synthetic", "split", "pretrain", "train", "evaluate", "analyze", "run")


# ---------------------------------------------------------------- inputs

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def synthetic_dir(cfg) -> Path:
    n, d, t = cfg.synthetic
    return Path(cfg.output_dir) / "data" / f"synthetic_{n}x{d}x{t}_seed{cfg.seed}"


def resolve_inputs(cfg) -> dict[str, Path]:
    """Input CSV paths; with ``synthetic`` set, generate them once under the output dir."""
    if cfg.synthetic is not None:
        out = synthetic_dir(cfg)
        paths = {k: out / f"{k}.csv" for k in ("responses", "expression", "fingerprints")}
        if not all(p.exists() for p in paths.values()):
            n, d, t = cfg.synthetic
            write_csvs(make_planted(n_cells=n, n_drugs=d, n_types=t, seed=cfg.seed), out)
        return paths
    paths = {}
    for key in ("responses", "expression", "fingerprints"):
        value = getattr(cfg, key)
        if not value:
            raise ConfigError(f"{key} path is required (or use --synthetic)")
        paths[key] = Path(value)
    return paths


def load_corpus(cfg) -> tuple[Corpus, dict[str, Path]]:
    paths = resolve_inputs(cfg)
    table = load_responses(paths["responses"])
    corpus = assemble(table, load_expression(paths["expression"]), load_fingerprints(paths["fingerprints"]), cfg.percentile)
    return corpus, paths


def write_provenance(cfg, command: str, inputs: dict[str, Path]):
    out = Path(cfg.output_dir)
    prov = {
        "command": command,
        "seed": cfg.seed,
        "config": cfg.to_json(),
        "inputs": {k: {"path": str(p), "sha256": _sha256(p)} for k, p in sorted(inputs.items()) if Path(p).exists()},
    }
    (out / "provenance").mkdir(parents=True, exist_ok=True)
    _write_json(out / "provenance" / f"{command}.json", prov)
    _write_json(out / "config.json", cfg.to_json())


def _write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _write_rows(path, header, rows):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _write_log(path, losses):
    _write_rows(path, ["epoch", "loss"], [(e, float(v)) for e, v in enumerate(losses)])


def folds_path(cfg) -> Path:
    return Path(cfg.output_dir) / "folds.csv"


def get_folds(cfg, corpus: Corpus):
    """Fold assignment from ``folds.csv`` in the output dir, created on first use."""
    path = folds_path(cfg)
    if path.exists():
        folds = read_folds(path, cfg.seed)
        if folds.n_folds != cfg.n_folds:
            raise ConfigError(f"{path} has {folds.n_folds} folds but n_folds is {cfg.n_folds}")
        return folds
    cells = [CellProfile(c, t, np.zeros(0)) for c, t in zip(corpus.table.cells, corpus.cell_types)]
    folds = make_lco_folds(cells, cfg.n_folds, cfg.seed)
    write_folds(folds, path)
    return folds


def model_path(cfg, fold: int) -> Path:
    return Path(cfg.output_dir) / f"model_fold{fold}.json"


# ---------------------------------------------------------------- fold jobs
# Module-level so they can be shipped to worker processes.

def _pretrain_job(corpus, folds, fold, pre_cfg):
    train_idx, _ = split_indices(corpus, folds, fold)
    return pretrain_fold(corpus, train_idx, replace(pre_cfg, seed=fold_seed(pre_cfg.seed, fold, 0)))


def _train_job(corpus, folds, fold, enc_blob, rank_cfg):
    train_idx, _ = split_indices(corpus, folds, fold)
    encoder = PretrainedEncoder.from_blob(enc_blob) if enc_blob is not None else None
    try:
        trained = train_fold(corpus, train_idx, encoder, rank_cfg, fold)
    except (ShapeError, DomainError) as exc:
        if encoder is None:
            raise
        raise ConfigError(f"encoder checkpoint does not match the model config: {exc}") from None
    # blobs, not live models: the parameter store relies on shared views
    return trained.to_blob(), trained.losses


def _map_folds(cfg, fn, args_per_fold):
    if cfg.jobs > 1 and len(args_per_fold) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(args_per_fold))) as ex:
            futures = [ex.submit(fn, *a) for a in args_per_fold]
            return [f.result() for f in futures]
    return [fn(*a) for a in args_per_fold]


# ---------------------------------------------------------------- commands

def cmd_synthetic(cfg):
    if cfg.synthetic is None:
        raise ConfigError("synthetic needs --synthetic N_CELLS N_DRUGS N_TYPES")
    paths = resolve_inputs(cfg)
    write_provenance(cfg, "synthetic", paths)
    print(synthetic_dir(cfg))


def cmd_split(cfg):
    corpus, inputs = load_corpus(cfg)
    path = folds_path(cfg)
    if path.exists():
        path.unlink()
    get_folds(cfg, corpus)
    write_provenance(cfg, "split", inputs)


def cmd_pretrain(cfg):
    corpus, inputs = load_corpus(cfg)
    folds = get_folds(cfg, corpus)
    pre_cfg = cfg.pretrain_config()
    encs = _map_folds(cfg, _pretrain_job, [(corpus, folds, k, pre_cfg) for k in range(cfg.n_folds)])
    for k, enc in enumerate(encs):
        _write_log(Path(cfg.output_dir) / f"pretrain_log_fold{k}.csv", enc.losses)
    meta = {"gene_dims": [corpus.expression.shape[1], *cfg.gene_hidden, cfg.latent_dim], "seed": cfg.seed}
    checkpoint.save(cfg.encoder_path, "encoder", {k: e.to_blob() for k, e in enumerate(encs)}, meta)
    write_provenance(cfg, "pretrain", inputs)


def cmd_train(cfg):
    corpus, inputs = load_corpus(cfg)
    folds = get_folds(cfg, corpus)
    enc_blobs = {k: None for k in range(cfg.n_folds)}
    if cfg.use_pretrained:
        enc = checkpoint.load(cfg.encoder_path, "encoder")
        missing = [k for k in range(cfg.n_folds) if k not in enc["folds"]]
        if missing:
            raise ConfigError(f"encoder checkpoint {cfg.encoder_path} lacks folds {missing}")
        enc_blobs = enc["folds"]
        inputs = {**inputs, "checkpoint": cfg.encoder_path}
    rank_cfg = cfg.ranker_config()
    results = _map_folds(cfg, _train_job, [(corpus, folds, k, enc_blobs[k], rank_cfg) for k in range(cfg.n_folds)])
    for k, (blob, losses) in enumerate(results):
        checkpoint.save(model_path(cfg, k), "model", {k: blob}, {"loss_kind": cfg.loss_kind, "seed": cfg.seed})
        _write_log(Path(cfg.output_dir) / f"train_log_fold{k}.csv", losses)
    write_provenance(cfg, "train", inputs)


def load_trained(cfg, fold: int) -> TrainedModel:
    blob = checkpoint.load(model_path(cfg, fold), "model")
    if fold not in blob["folds"]:
        raise ConfigError(f"{model_path(cfg, fold)} does not hold fold {fold}")
    try:
        return TrainedModel.from_blob(blob["folds"][fold], fold)
    except (KeyError, TypeError, ShapeError, DomainError) as exc:
        raise ConfigError(f"corrupt model checkpoint {model_path(cfg, fold)}: {exc}") from None


def cmd_evaluate(cfg):
    corpus, inputs = load_corpus(cfg)
    folds = get_folds(cfg, corpus)
    ks = list(cfg.ks)
    names = metric_names(ks)
    reports, all_rows = [], []
    for k in range(cfg.n_folds):
        trained = load_trained(cfg, k)
        _, test_idx = split_indices(corpus, folds, k)
        report, rows = evaluate_fold(corpus, trained, test_idx, ks)
        reports.append(report)
        all_rows.extend(rows)
        inputs[f"model_fold{k}"] = model_path(cfg, k)
    overall = aggregate([{n: r[n] for n in names} for r in all_rows], None, names)
    out = Path(cfg.output_dir)
    _write_rows(out / "report.csv", ["fold", "cell_id", *names], [(r["fold"], r["cell_id"], *(r[n] for n in names)) for r in all_rows])
    summary = {
        "loss_kind": cfg.loss_kind,
        "n_folds": cfg.n_folds,
        "seed": cfg.seed,
        "ks": ks,
        "folds": [r.to_json() for r in reports],
        "overall": {k: v for k, v in overall.to_json().items() if k != "fold"},
    }
    _write_json(out / "metrics.json", summary)
    write_provenance(cfg, "evaluate", inputs)
    for name in ("AP@1", "AH@5", "AH@20", "CI", "sCI"):
        if name in overall.means:
            log.info("%s = %.4f", name, overall.means[name])


def _matrix_rows(S: an.SimilarityMatrix):
    return [(lab, *(float(v) for v in row)) for lab, row in zip(S.labels, S.values)]


def _summary_rows(summary):
    return [(r["cluster"], r["size"], r["latent"], r["reference"]) for r in summary]


def cmd_analyze(cfg):
    corpus, inputs = load_corpus(cfg)
    k = cfg.analysis_fold
    trained = load_trained(cfg, k)
    inputs[f"model_fold{k}"] = model_path(cfg, k)
    out = Path(cfg.output_dir) / "analysis"
    table = corpus.table
    X = trained.standardizer.transform(corpus.expression)
    cell_emb = trained.model.encode_cell(X)
    drug_emb = trained.model.encode_drug(corpus.fingerprints)

    sim_cm = an.rbf_similarity(cell_emb, labels=table.cells)
    sim_cr = an.spearman_matrix(table.matrix(), labels=table.cells)
    sim_dm = an.rbf_similarity(drug_emb, labels=table.drugs)
    sim_ds = an.jaccard_matrix(corpus.labeled.label_matrix(), labels=table.drugs)
    for name, S in (("cell_similarity_latent", sim_cm), ("cell_similarity_response", sim_cr),
                    ("drug_similarity_latent", sim_dm), ("drug_similarity_sensitivity", sim_ds)):
        _write_rows(out / f"{name}.csv", ["id", *S.labels], _matrix_rows(S))

    corr_c, used_c, skip_c = an.upper_pairs_correlation(sim_cm, sim_cr)
    corr_d, used_d, skip_d = an.upper_pairs_correlation(sim_dm, sim_ds)

    n_cells = cell_emb.shape[0]
    knn = {}
    knn_rows = []
    for kk in (1, 3, 5):
        if kk >= n_cells:
            continue
        acc, mean = an.knn_accuracy(cell_emb, corpus.cell_types, kk)
        knn[str(kk)] = mean
        knn_rows.extend((kk, c, float(a)) for c, a in zip(table.cells, acc))
    _write_rows(out / "knn_accuracy.csv", ["k", "cell_id", "accuracy"], knn_rows)

    cell_cl = an.kmeans_cluster(cell_emb, min(cfg.cell_clusters, n_cells), seed=fold_seed(cfg.seed, k, 2))
    drug_cl = an.kmeans_cluster(drug_emb, min(cfg.drug_clusters, drug_emb.shape[0]), seed=fold_seed(cfg.seed, k, 3))
    _write_rows(out / "cell_clusters.csv", ["cell_id", "cancer_type", "cluster"],
                zip(table.cells, corpus.cell_types, cell_cl.assignment.tolist()))
    _write_rows(out / "drug_clusters.csv", ["drug_id", "cluster"], zip(table.drugs, drug_cl.assignment.tolist()))
    cell_sum = an.intra_cluster_summary(cell_cl, sim_cm, sim_cr)
    drug_sum = an.intra_cluster_summary(drug_cl, sim_dm, sim_ds)
    header = ["cluster", "size", "mean_latent_similarity", "mean_reference_similarity"]
    _write_rows(out / "cell_cluster_summary.csv", header, _summary_rows(cell_sum))
    _write_rows(out / "drug_cluster_summary.csv", header, _summary_rows(drug_sum))

    top = an.compact_clusters(cell_sum, 10)
    overlap = an.cluster_overlap_similarity(cell_cl.assignment, corpus.cell_types, top)
    _write_rows(out / "cancer_type_overlap.csv", ["cancer_type", *overlap.labels], _matrix_rows(overlap))

    def clean(v):
        return None if isinstance(v, float) and math.isnan(v) else v

    _write_json(out / "correlations.json", {
        "fold": k,
        "corr_c_M_R": {"pearson": clean(corr_c), "pairs_used": used_c, "pairs_skipped": skip_c},
        "corr_d_M_S": {"pearson": clean(corr_d), "pairs_used": used_d, "pairs_skipped": skip_d},
        "knn_accuracy": {kk: clean(v) for kk, v in knn.items()},
        "compact_cell_clusters": top,
    })
    write_provenance(cfg, "analyze", inputs)
    log.info("corr_c(M,R) = %s, corr_d(M,S) = %s", clean(corr_c), clean(corr_d))


def cmd_run(cfg):
    """split + pretrain (when enabled) + train + evaluate."""
    cmd_split(cfg)
    if cfg.use_pretrained:
        cmd_pretrain(cfg)
    cmd_train(cfg)
    cmd_evaluate(cfg)


HANDLERS = {
    "synthetic": cmd_synthetic,
    "split": cmd_split,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
    "run": cmd_run,
}


# ---------------------------------------------------------------- parsing

def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--responses")
    common.add_argument("--expression")
    common.add_argument("--fingerprints")
    common.add_argument("--checkpoint", help="encoder checkpoint path (default <output-dir>/encoder.json)")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--synthetic", nargs=3, type=int, metavar=("N_CELLS", "N_DRUGS", "N_TYPES"),
                        help="generate a planted benchmark instead of reading input files")
    common.add_argument("--loss-kind", dest="loss_kind", choices=("list_one", "list_all"))
    common.add_argument("--percentile", type=float)
    common.add_argument("--n-folds", dest="n_folds", type=int)
    common.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int)
    common.add_argument("--rank-epochs", dest="rank_epochs", type=int)
    common.add_argument("--batch-size", dest="batch_size", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--tau", type=float)
    common.add_argument("--gene-hidden", dest="gene_hidden", type=int, nargs="+")
    common.add_argument("--latent-dim", dest="latent_dim", type=int)
    common.add_argument("--drug-hidden", dest="drug_hidden", type=int)
    common.add_argument("--drug-dim", dest="drug_dim", type=int, help="drug embedding size M")
    common.add_argument("--w-init", dest="w_init", choices=("zero", "uniform"))
    common.add_argument("--use-pretrained", dest="use_pretrained", type=_bool)
    common.add_argument("--seed", type=int)
    common.add_argument("--ks", type=int, nargs="+")
    common.add_argument("--jobs", type=int, help="parallel workers across folds")
    common.add_argument("--analysis-fold", dest="analysis_fold", type=int)
    common.add_argument("--cell-clusters", dest="cell_clusters", type=int)
    common.add_argument("--drug-clusters", dest="drug_clusters", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="drugrank", description="Listwise drug prioritization for cell lines.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "synthetic": "write a planted synthetic benchmark",
        "split": "write stratified leave-cell-lines-out folds",
        "pretrain": "pretrain the per-fold expression autoencoders",
        "train": "train per-fold ranking models",
        "evaluate": "score held-out cells and write report.csv / metrics.json",
        "analyze": "embedding similarity, kNN and clustering analyses",
        "run": "split, pretrain, train and evaluate in one go",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


_NOT_CONFIG = ("command", "config", "verbose")


def main(argv=None) -> int:
    from .config import parse_config

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    try:
        cfg = parse_config(args.config, overrides)
        HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"drugrank: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"drugrank: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergence as exc:
        print(f"drugrank: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return 0


if __name__ == "__main__":
    sys.exit(main())
