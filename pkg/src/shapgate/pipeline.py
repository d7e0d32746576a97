"""End-to-end experiment orchestration.

Per dataset and master seed: split a stratified holdout, fit the scaler and
the boosted ensemble on training rows only, compute attribution vectors for
all rows from that one fit, select clustering hyperparameters by five-fold
cross-validation on the training split (mean weighted F1 of the full
variant), then refit clusters on all training attributions, train every
variant on the training split, and evaluate once on the untouched holdout.

Holdout hygiene: test rows never reach scaler fitting, ensemble fitting, the
attribution background, cluster fitting, or CV selection. The tests enforce
this with a tripwire that corrupts test-row features and asserts that every
fitted artifact is unchanged.

Variants:
  full              attention gate fed by the row's attributions + cluster one-hot
  simple_nn         plain MLP on raw features (no gate, no clusters)
  random_attention  gate fed by one fixed seeded noise vector + cluster one-hot
  no_cluster_labels attribution-fed gate, no cluster block
"""

import hashlib
import json
import os
import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import attribution, dataset, gbm, kernel_kmeans, metrics, network
from .errors import DataError, ShapgateError, UsageError

VARIANTS = ("full", "simple_nn", "random_attention", "no_cluster_labels")

# network wiring per variant: (attention_mode, cluster_feature)
VARIANT_WIRING = {
    "full": ("shap", True),
    "simple_nn": ("off", False),
    "random_attention": ("random", True),
    "no_cluster_labels": ("shap", False),
}

# external reference values the experiments are compared against (weighted F1
# of the full variant); deviations beyond the tolerance are reported in the
# manifest rather than hidden
REFERENCE_F1 = {"diabetes": 0.98, "heart": 0.80, "credit": 0.86}
REFERENCE_TOLERANCE = 0.07


def default_grid():
    """Kernel-major grid order; selection ties resolve to the earliest cell."""
    kernels = [
        kernel_kmeans.KernelSpec("linear"),
        kernel_kmeans.KernelSpec("polynomial", degree=2, coef0=0.0),
        kernel_kmeans.KernelSpec("polynomial", degree=2, coef0=1.0),
        kernel_kmeans.KernelSpec("polynomial", degree=3, coef0=0.0),
        kernel_kmeans.KernelSpec("polynomial", degree=3, coef0=1.0),
        kernel_kmeans.KernelSpec("radial", gamma=0.01),
        kernel_kmeans.KernelSpec("radial", gamma=0.1),
        kernel_kmeans.KernelSpec("radial", gamma=1.0),
        kernel_kmeans.KernelSpec("radial", gamma=10.0),
    ]
    return [(spec, k) for spec in kernels for k in (2, 3, 4, 5, 6)]


@dataclass
class ExperimentConfig:
    dataset: str
    master_seed: int = 0
    n_seeds: int = 10
    holdout_fraction: float = 0.2
    n_folds: int = 5
    gbm_config: gbm.GbmConfig = field(default_factory=gbm.GbmConfig)
    grid: list = field(default_factory=default_grid)
    step_size: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    variants: tuple = VARIANTS

    def __post_init__(self):
        if self.dataset not in dataset.SCHEMAS:
            raise UsageError(f"unknown dataset {self.dataset!r}")
        if self.n_seeds < 1:
            raise UsageError("n_seeds must be >= 1")
        unknown = [v for v in self.variants if v not in VARIANT_WIRING]
        if unknown:
            raise UsageError(f"unknown variants: {unknown}")

    def net_config(self, variant, seed):
        mode, cluster = VARIANT_WIRING[variant]
        return network.NetConfig(
            attention_mode=mode, cluster_feature=cluster,
            step_size=self.step_size, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience, seed=seed,
        )


def child_seed(master, *tags):
    """Deterministic derived integer seed."""
    return int(np.random.default_rng([master, *tags]).integers(2**63))


def _name_tag(name):
    """Stable integer tag for a string, so seeds follow content, not position.

    Grid cells with identical (kernel, k) must produce identical results
    wherever they sit in the grid, and a variant keeps its seed when the
    variant subset changes.
    """
    return zlib.crc32(name.encode("utf-8"))


@dataclass
class PreparedData:
    dataset: str
    matrix: dataset.FeatureMatrix
    train_ids: np.ndarray
    test_ids: np.ndarray
    n_imputed: int


@dataclass
class FittedCore:
    ensemble: gbm.TreeEnsemble
    background: attribution.Background
    shap_train: attribution.ShapMatrix  # aligned with train_ids order
    shap_test: attribution.ShapMatrix  # aligned with test_ids order


def prepare(config, data_path):
    """Load, impute, split, and scale. Scaler parameters come from train rows only."""
    table = dataset.load_dataset(data_path, config.dataset)
    table, n_imputed = dataset.handle_missing(table)
    split = dataset.SplitSpec(
        holdout_fraction=config.holdout_fraction,
        n_folds=config.n_folds, seed=config.master_seed,
    )
    train_ids, test_ids = dataset.split_holdout(table, split)
    matrix = dataset.fit_transform(table, train_ids)
    return PreparedData(
        dataset=config.dataset, matrix=matrix,
        train_ids=train_ids, test_ids=test_ids, n_imputed=n_imputed,
    )


def fit_core(prepared, config):
    """Fit the ensemble and compute attributions for train and test rows."""
    X = prepared.matrix.values
    y = prepared.matrix.labels
    ens = gbm.fit(X[prepared.train_ids], y[prepared.train_ids], config.gbm_config)
    bg = attribution.make_background(
        X, prepared.train_ids, cap=1000, seed=child_seed(config.master_seed, 1)
    )
    shap_train = attribution.shap_matrix(ens, prepared.matrix, bg, rows=prepared.train_ids)
    shap_test = attribution.shap_matrix(ens, prepared.matrix, bg, rows=prepared.test_ids)
    return FittedCore(ensemble=ens, background=bg, shap_train=shap_train, shap_test=shap_test)


def _onehot(assignment, k):
    out = np.zeros((len(assignment), k))
    out[np.arange(len(assignment)), assignment] = 1.0
    return out


def _net_batches(X_fit, shap_fit, X_val, shap_val, spec, k, cluster_seed):
    """Fit clusters on fit-row attributions; out-of-sample assign the val rows."""
    model = kernel_kmeans.fit(shap_fit, k=k, spec=spec, seed=cluster_seed)
    fit_batch = network.NetBatch(
        x=X_fit, shap=shap_fit, onehot=_onehot(model.assignment, k)
    )
    val_batch = network.NetBatch(
        x=X_val, shap=shap_val,
        onehot=_onehot(kernel_kmeans.assign_batch(model, shap_val), k),
    )
    return model, fit_batch, val_batch


@dataclass
class GridCell:
    kernel: str
    k: int
    fold_f1: list
    mean_f1: float
    error: str | None = None


@dataclass
class GridResult:
    cells: list
    best_index: int
    folds_seed: int


def run_cv_grid(prepared, core, config):
    """Mean five-fold weighted F1 of the full variant for every grid cell."""
    X = prepared.matrix.values
    y = prepared.matrix.labels
    train_ids = prepared.train_ids
    shap_rows = core.shap_train.values  # aligned with train_ids order
    folds_seed = child_seed(config.master_seed, 2)
    folds = dataset.stratified_kfold(
        train_ids, y, dataset.SplitSpec(n_folds=config.n_folds, seed=folds_seed)
    )
    cells = []
    for spec, k in config.grid:
        cell_tag = _name_tag(spec.label())
        fold_f1 = []
        error = None
        try:
            for fold_id, (fit_rows, val_rows) in enumerate(folds):
                fit_pos = np.searchsorted(train_ids, fit_rows)
                val_pos = np.searchsorted(train_ids, val_rows)
                _, fit_batch, val_batch = _net_batches(
                    X[fit_rows], shap_rows[fit_pos], X[val_rows], shap_rows[val_pos],
                    spec, k, cluster_seed=child_seed(config.master_seed, 3, cell_tag, k, fold_id),
                )
                net_cfg = config.net_config(
                    "full", seed=child_seed(config.master_seed, 4, cell_tag, k, fold_id)
                )
                result = network.train(fit_batch, y[fit_rows], val_batch, y[val_rows], net_cfg)
                probs = network.predict(result.params, val_batch, net_cfg)
                fold_f1.append(metrics.evaluate(probs, y[val_rows]).f1)
            mean_f1 = float(np.mean(fold_f1))
        except ShapgateError as e:
            error = str(e)
            mean_f1 = float("nan")
        cells.append(GridCell(
            kernel=spec.label(), k=k, fold_f1=fold_f1, mean_f1=mean_f1, error=error,
        ))
    means = np.array([c.mean_f1 for c in cells])
    if np.all(np.isnan(means)):
        raise DataError("every grid cell failed during cross-validation")
    best_index = int(np.argmax(np.where(np.isnan(means), -np.inf, means)))
    return GridResult(cells=cells, best_index=best_index, folds_seed=folds_seed)


@dataclass
class VariantResult:
    report: metrics.EvalReport | None
    gate_input_sha256: str | None
    train_seconds: float
    error: str | None = None


def _gate_hash(core):
    digest = hashlib.sha256()
    digest.update(core.shap_train.values.tobytes())
    digest.update(core.shap_test.values.tobytes())
    return digest.hexdigest()


def run_final(prepared, core, spec, k, config):
    """Refit clusters on all training attributions, train and evaluate variants."""
    X = prepared.matrix.values
    y = prepared.matrix.labels
    tr, te = prepared.train_ids, prepared.test_ids
    cluster_model, train_full, test_full = _net_batches(
        X[tr], core.shap_train.values, X[te], core.shap_test.values,
        spec, k, cluster_seed=child_seed(config.master_seed, 5),
    )
    shap_hash = _gate_hash(core)
    results = {}
    for variant in config.variants:
        start = time.perf_counter()
        try:
            net_cfg = config.net_config(
                variant, seed=child_seed(config.master_seed, 6, _name_tag(variant))
            )
            train_batch = network.NetBatch(
                x=train_full.x,
                shap=train_full.shap if net_cfg.attention_mode == "shap" else None,
                onehot=train_full.onehot if net_cfg.cluster_feature else None,
            )
            test_batch = network.NetBatch(
                x=test_full.x,
                shap=test_full.shap if net_cfg.attention_mode == "shap" else None,
                onehot=test_full.onehot if net_cfg.cluster_feature else None,
            )
            # final fit has no held-back fold: early stopping monitors training loss
            fitted = network.train(train_batch, y[tr], train_batch, y[tr], net_cfg)
            probs = network.predict(fitted.params, test_batch, net_cfg)
            report = metrics.evaluate(probs, y[te])
            gate = shap_hash if net_cfg.attention_mode == "shap" else None
            results[variant] = VariantResult(
                report=report, gate_input_sha256=gate,
                train_seconds=time.perf_counter() - start,
            )
        except ShapgateError as e:
            results[variant] = VariantResult(
                report=None, gate_input_sha256=None,
                train_seconds=time.perf_counter() - start, error=str(e),
            )
    return cluster_model, results


@dataclass
class RunRecord:
    dataset: str
    master_seed: int
    selection_seed: int  # master seed whose CV run chose the hyperparameters
    n_train: int
    n_test: int
    n_features: int
    chosen_spec: kernel_kmeans.KernelSpec
    chosen_k: int
    grid_cells: list  # empty when selection was inherited from another seed
    variants: dict  # name -> VariantResult
    timings: dict  # stage -> seconds

    @property
    def chosen_kernel(self):
        return self.chosen_spec.label()


def run_experiment(config, data_path, chosen=None):
    """One full run for one master seed.

    chosen: optional (KernelSpec, k, selection_seed) to reuse instead of
    running the CV grid; used by seed repetitions so selection happens once
    per dataset.
    """
    timings = {}
    start = time.perf_counter()
    prepared = prepare(config, data_path)
    timings["prepare"] = time.perf_counter() - start

    start = time.perf_counter()
    core = fit_core(prepared, config)
    timings["fit_and_attribute"] = time.perf_counter() - start

    grid_cells = []
    selection_seed = config.master_seed
    if chosen is None:
        start = time.perf_counter()
        grid_result = run_cv_grid(prepared, core, config)
        timings["cv_grid"] = time.perf_counter() - start
        spec, k = config.grid[grid_result.best_index]
        grid_cells = grid_result.cells
    else:
        spec, k, selection_seed = chosen

    start = time.perf_counter()
    _, variant_results = run_final(prepared, core, spec, k, config)
    timings["final"] = time.perf_counter() - start

    return RunRecord(
        dataset=config.dataset,
        master_seed=config.master_seed,
        selection_seed=selection_seed,
        n_train=prepared.train_ids.size,
        n_test=prepared.test_ids.size,
        n_features=prepared.matrix.values.shape[1],
        chosen_spec=spec,
        chosen_k=k,
        grid_cells=grid_cells,
        variants=variant_results,
        timings=timings,
    )


def run_many(config, data_path):
    """config.n_seeds repetitions; CV selection runs once, on the first seed."""
    records = []
    chosen = None
    for i in range(config.n_seeds):
        cfg = replace(config, master_seed=config.master_seed + i)
        record = run_experiment(cfg, data_path, chosen=chosen)
        if chosen is None:
            chosen = (record.chosen_spec, record.chosen_k, record.master_seed)
        records.append(record)
    return records


def records_from_manifest(manifest):
    """Rebuild RunRecords from a manifest's "runs" list.

    ROC points are not stored in manifests, so rebuilt records carry empty
    roc_points and report emission skips the ROC CSVs.
    """
    records = []
    for run in manifest.get("runs", []):
        variants = {}
        for name, entry in run["variants"].items():
            report = None
            if "metrics" in entry:
                m = entry["metrics"]
                report = metrics.EvalReport(
                    precision=m["precision"], recall=m["recall"], f1=m["f1"],
                    accuracy=m["accuracy"], auc=m["auc"],
                    roc_points=[], threshold=0.5, n=run["n_test"],
                )
            variants[name] = VariantResult(
                report=report,
                gate_input_sha256=entry.get("gate_input_sha256"),
                train_seconds=entry.get("train_seconds", 0.0),
                error=entry.get("error"),
            )
        records.append(RunRecord(
            dataset=run["dataset"],
            master_seed=run["master_seed"],
            selection_seed=run["selection_seed"],
            n_train=run["n_train"],
            n_test=run["n_test"],
            n_features=run["n_features"],
            chosen_spec=kernel_kmeans.spec_from_label(run["chosen_kernel"]),
            chosen_k=run["chosen_k"],
            grid_cells=[
                GridCell(kernel=c["kernel"], k=c["k"], fold_f1=c["fold_f1"],
                         mean_f1=float("nan") if c["mean_f1"] is None else c["mean_f1"],
                         error=c["error"])
                for c in run.get("grid", [])
            ],
            variants=variants,
            timings=run.get("timings", {}),
        ))
    if not records:
        raise DataError("manifest contains no runs")
    return records


# ------------------------------------------------------------------ reporting

def _median(values):
    return float(np.median(np.asarray(values)))


def _variant_metric_rows(records, variants):
    """Median metrics across records, one row per variant."""
    rows = []
    for variant in variants:
        reports = [r.variants[variant].report for r in records
                   if variant in r.variants and r.variants[variant].report is not None]
        if not reports:
            rows.append((variant, None))
            continue
        rows.append((variant, {
            "precision": _median([rep.precision for rep in reports]),
            "recall": _median([rep.recall for rep in reports]),
            "f1": _median([rep.f1 for rep in reports]),
            "accuracy": _median([rep.accuracy for rep in reports]),
            "auc": _median([rep.auc for rep in reports]),
        }))
    return rows


def _median_record(records, variant="full"):
    """The record whose full-variant F1 sits at the (lower) median."""
    scored = [
        (r.variants[variant].report.f1, i)
        for i, r in enumerate(records)
        if variant in r.variants and r.variants[variant].report is not None
    ]
    if not scored:
        return records[0]
    scored.sort()
    return records[scored[(len(scored) - 1) // 2][1]]


def _record_manifest(record):
    out = {
        "dataset": record.dataset,
        "master_seed": record.master_seed,
        "selection_seed": record.selection_seed,
        "n_train": record.n_train,
        "n_test": record.n_test,
        "n_features": record.n_features,
        "chosen_kernel": record.chosen_kernel,
        "chosen_k": record.chosen_k,
        "timings": {k: round(v, 3) for k, v in record.timings.items()},
        "variants": {},
        "grid": [
            {"kernel": c.kernel, "k": c.k,
             "mean_f1": None if np.isnan(c.mean_f1) else c.mean_f1,
             "fold_f1": c.fold_f1, "error": c.error}
            for c in record.grid_cells
        ],
    }
    for name, vr in record.variants.items():
        entry = {
            "gate_input_sha256": vr.gate_input_sha256,
            "train_seconds": round(vr.train_seconds, 3),
            "error": vr.error,
        }
        if vr.report is not None:
            entry["metrics"] = vr.report.metric_dict()
        out["variants"][name] = entry
    return out


def emit_report(records, out_dir):
    """Write metrics CSVs, ROC CSVs, a Markdown summary, and a JSON manifest."""
    if not records:
        raise DataError("no records to report")
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as e:
        raise UsageError(f"output directory {out_dir!r} is not writable: {e}") from e

    by_dataset = {}
    for record in records:
        by_dataset.setdefault(record.dataset, []).append(record)

    written = []
    summary_lines = ["# Experiment summary", ""]
    manifest = {"datasets": {}, "runs": [], "reference_check": {}}
    for ds, recs in sorted(by_dataset.items()):
        variants = [v for v in VARIANTS if any(v in r.variants for r in recs)]
        rows = _variant_metric_rows(recs, variants)
        csv_path = os.path.join(out_dir, f"{ds}_metrics.csv")
        lines = ["variant,precision,recall,f1,accuracy,auc"]
        for variant, med in rows:
            if med is None:
                lines.append(f"{variant},failed,failed,failed,failed,failed")
            else:
                lines.append(
                    f"{variant},{med['precision']!r},{med['recall']!r},"
                    f"{med['f1']!r},{med['accuracy']!r},{med['auc']!r}"
                )
        with open(csv_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        written.append(csv_path)

        roc_source = _median_record(recs)
        for variant in variants:
            vr = roc_source.variants.get(variant)
            if vr is None or vr.report is None or not vr.report.roc_points:
                continue
            roc_path = os.path.join(out_dir, f"{ds}_roc_{variant}.csv")
            roc_lines = ["fpr,tpr"]
            for fpr, tpr in vr.report.roc_points:
                roc_lines.append(f"{fpr!r},{tpr!r}")
            with open(roc_path, "w") as fh:
                fh.write("\n".join(roc_lines) + "\n")
            written.append(roc_path)

        chosen = f"kernel={recs[0].chosen_kernel}, k={recs[0].chosen_k}"
        seeds = [r.master_seed for r in recs]
        summary_lines += [
            f"## {ds}",
            "",
            f"Chosen clustering: {chosen} (selected on seed {recs[0].selection_seed}; "
            f"{len(recs)} run{'s' if len(recs) > 1 else ''}, seeds {seeds})",
            "",
            "| variant | precision | recall | F1 | accuracy | AUC |",
            "|---|---|---|---|---|---|",
        ]
        for variant, med in rows:
            if med is None:
                summary_lines.append(f"| {variant} | failed | failed | failed | failed | failed |")
            else:
                summary_lines.append(
                    f"| {variant} | {med['precision']:.3f} | {med['recall']:.3f} "
                    f"| {med['f1']:.3f} | {med['accuracy']:.3f} | {med['auc']:.3f} |"
                )
        summary_lines.append("")

        full_row = dict(rows).get("full")
        if full_row is not None and ds in REFERENCE_F1:
            deviation = full_row["f1"] - REFERENCE_F1[ds]
            within = abs(deviation) <= REFERENCE_TOLERANCE
            manifest["reference_check"][ds] = {
                "reference_f1": REFERENCE_F1[ds],
                "median_f1": full_row["f1"],
                "deviation": deviation,
                "tolerance": REFERENCE_TOLERANCE,
                "within_tolerance": within,
            }
            note = "within" if within else "OUTSIDE"
            summary_lines += [
                f"Reference check: median full F1 {full_row['f1']:.3f} vs reference "
                f"{REFERENCE_F1[ds]:.2f} (deviation {deviation:+.3f}, {note} "
                f"the +/-{REFERENCE_TOLERANCE} tolerance)",
                "",
            ]

        manifest["datasets"][ds] = {
            "variant_medians": {v: m for v, m in rows},
            "chosen_kernel": recs[0].chosen_kernel,
            "chosen_k": recs[0].chosen_k,
            "seeds": seeds,
        }

    manifest["runs"] = [_record_manifest(r) for r in records]
    summary_path = os.path.join(out_dir, "summary.md")
    with open(summary_path, "w") as fh:
        fh.write("\n".join(summary_lines) + "\n")
    written.append(summary_path)
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(manifest_path)
    return written
