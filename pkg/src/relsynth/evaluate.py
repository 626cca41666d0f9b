"""Model compatibility and nearest-neighbor privacy of a synthetic dataset."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyTable, SchemaFingerprintMismatch, SingleClassLabels, TargetNotCategorical
from .gbt import GradientBoostedTrees
from .graph import build_graph
from .metrics import f1_score, macro_roc_auc, roc_auc
from .preprocess import TableCodec, encode_table, fit_table_codec
from .relational import (MISSING, Kind, RelationalDataset, TableData, join_on_identifier,
                         schema_fingerprint)

PRIVACY_THRESHOLD = 0.05
REPORT_VERSION = 1


def train_test_split(dataset: RelationalDataset, fraction: float = 0.8, seed: int = 0):
    """Split primary rows into folds; every other row follows its connected component."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    graph = build_graph(dataset)
    root = dataset.table_index(dataset.primary_table)
    n_root = len(dataset.tables[root])
    rng = np.random.default_rng(seed)
    n_train = int(round(fraction * n_root))
    in_train = np.zeros(n_root, dtype=bool)
    in_train[rng.permutation(n_root)[:n_train]] = True

    vertex_train = np.ones(graph.n_vertices, dtype=bool)
    offset = graph.table_offsets[root]
    for comp in graph.components():
        roots = comp[(comp >= offset) & (comp < offset + n_root)]
        if len(roots):
            vertex_train[comp] = in_train[roots[0] - offset]

    folds = ([], [])
    for ti, t in enumerate(dataset.tables):
        flags = vertex_train[graph.table_offsets[ti]:graph.table_offsets[ti] + len(t)]
        folds[0].append(t.with_rows(r for r, f in zip(t.rows, flags) if f))
        folds[1].append(t.with_rows(r for r, f in zip(t.rows, flags) if not f))
    return dataset.replace_tables(folds[0]), dataset.replace_tables(folds[1])


def choose_secondary(dataset: RelationalDataset, target: str) -> str:
    """The secondary table holding ``target``, else the first linked secondary."""
    primary = dataset.table(dataset.primary_table)
    if target not in primary.attribute_names:
        for link in dataset.links:
            if target in dataset.table(link.secondary).attribute_names:
                return link.secondary
    return dataset.links[0].secondary


def _concat(tables, name="joined"):
    tables = list(tables)
    return TableData(name, tables[0].attributes, tuple(r for t in tables for r in t.rows))


@dataclass(frozen=True)
class ClassifierConfig:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    seed: int = 0


@dataclass
class TableClassifier:
    codec: TableCodec
    target: str
    feature_columns: np.ndarray
    classes: tuple
    model: GradientBoostedTrees

    def features(self, table: TableData) -> np.ndarray:
        enc, _ = encode_table(table, self.codec, lenient=True)
        return enc.matrix[:, self.feature_columns]


def _labels(table: TableData, target: str, classes):
    index = {c: i for i, c in enumerate(classes)}
    keep, labels = [], []
    for r, v in enumerate(table.column(target)):
        if v is not MISSING and v in index:
            keep.append(r)
            labels.append(index[v])
    return np.array(keep, dtype=np.int64), np.array(labels, dtype=np.int64)


def fit_classifier(table: TableData, target: str, config: ClassifierConfig = ClassifierConfig(),
                   codec: Optional[TableCodec] = None) -> TableClassifier:
    """Boosted trees predicting ``target`` from the other encoded attributes."""
    if target not in table.attribute_names:
        raise KeyError(f"target {target!r} not in table {table.name!r}")
    if table.attribute(target).kind is not Kind.CATEGORICAL:
        raise TargetNotCategorical(f"target {target!r} is {table.attribute(target).kind.value}")
    if codec is None:
        codec = fit_table_codec(table)
    a, b = codec.spans[target]
    feature_columns = np.array([c for c in range(codec.width) if not a <= c < b], dtype=np.int64)
    classes = codec.column(target).categories
    rows, y = _labels(table, target, classes)
    if not len(rows):
        raise EmptyTable(f"no rows with a defined {target!r} to train on")
    clf = TableClassifier(codec, target, feature_columns, classes, None)
    X = clf.features(table)[rows]
    clf.model = GradientBoostedTrees(config.n_trees, config.max_depth, config.learning_rate,
                                     config.reg_lambda, config.min_child_weight, seed=config.seed)
    clf.model.fit(X, y, n_classes=max(len(classes), 2))
    return clf


def predict(classifier: TableClassifier, table: TableData) -> np.ndarray:
    """Class-probability rows, columns ordered as ``classifier.classes``."""
    P = classifier.model.predict_proba(classifier.features(table))
    return P[:, :max(len(classifier.classes), 1)]


@dataclass
class MetricComparison:
    metric: str
    real: Optional[float]
    synthetic: Optional[float]
    mc: Optional[float]
    note: Optional[str] = None


def compatibility_value(e_real: float, e_synth: float) -> Optional[float]:
    """|1 - e_real / e_synth|; None when the synthetic score is zero."""
    if e_synth == 0:
        return None
    return abs(1.0 - e_real / e_synth)


def _effectiveness(metric, proba, labels, classes):
    if metric == "roc_auc":
        if len(classes) == 2:
            return roc_auc(proba[:, 1], labels == 1)
        return macro_roc_auc(proba, labels)
    pred = np.argmax(proba, axis=1)
    return f1_score(pred, labels, positive=1 if len(classes) == 2 else None)


@dataclass
class CompatibilityResult:
    target: str
    secondary: str
    metrics: dict
    n_train: int
    n_synthetic: int
    n_test: int
    classes: tuple = ()


def compare_classifiers(train: RelationalDataset, test: RelationalDataset, synthetic: RelationalDataset,
                        target: str, config: ClassifierConfig = ClassifierConfig(),
                        secondary: Optional[str] = None) -> CompatibilityResult:
    """Train on joined real-train and joined synthetic rows; score both on joined real-test rows."""
    if schema_fingerprint(synthetic) != schema_fingerprint(train):
        raise SchemaFingerprintMismatch("synthetic dataset schema differs from the real one")
    secondary = secondary or choose_secondary(train, target)
    j_train = join_on_identifier(train, secondary)
    j_test = join_on_identifier(test, secondary)
    j_synth = join_on_identifier(synthetic, secondary)
    if target not in j_train.attribute_names:
        raise KeyError(f"target {target!r} not in the join of {train.primary_table!r} and {secondary!r}")
    codec = fit_table_codec(_concat([j_train, j_test]))
    m = fit_classifier(j_train, target, config, codec)
    m_hat = fit_classifier(j_synth, target, config, codec)
    rows, y = _labels(j_test, target, m.classes)
    if not len(rows):
        raise EmptyTable("test fold has no rows with a defined target")
    metrics = {}
    for metric in ("roc_auc", "f1"):
        try:
            e = _effectiveness(metric, predict(m, j_test)[rows], y, m.classes)
            e_hat = _effectiveness(metric, predict(m_hat, j_test)[rows], y, m.classes)
        except SingleClassLabels as exc:
            metrics[metric] = MetricComparison(metric, None, None, None, str(exc))
            continue
        mc = compatibility_value(e, e_hat)
        note = None if mc is not None else "synthetic-model score is zero; ratio undefined"
        metrics[metric] = MetricComparison(metric, e, e_hat, mc, note)
    return CompatibilityResult(target, secondary, metrics, len(j_train), len(j_synth), len(j_test), m.classes)


def model_compatibility(real: RelationalDataset, synthetic: RelationalDataset, target: str, seed: int,
                        fraction: float = 0.8, config: Optional[ClassifierConfig] = None,
                        secondary: Optional[str] = None) -> CompatibilityResult:
    """Split ``real`` with ``seed`` and compare classifiers trained on its train fold and on ``synthetic``."""
    train, test = train_test_split(real, fraction, seed)
    config = config or ClassifierConfig(seed=seed)
    return compare_classifiers(train, test, synthetic, target, config, secondary)


def _ratio(num, den):
    out = np.zeros_like(num)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    out[~pos & (num > 0)] = np.inf
    return out


def percentile(values, q: float) -> float:
    """Linear interpolation between order statistics; infinite neighbors stay infinite."""
    a = np.sort(np.asarray(values, dtype=np.float64))
    h = (len(a) - 1) * q / 100.0
    lo = int(math.floor(h))
    hi = min(lo + 1, len(a) - 1)
    frac = h - lo
    if frac == 0.0 or a[hi] == a[lo]:
        return float(a[lo])
    if not np.isfinite(a[hi]):
        return math.inf
    return float(a[lo] + frac * (a[hi] - a[lo]))


def nn_distance(X, Y=None) -> np.ndarray:
    """Euclidean distance from each row of X to its nearest row of Y (of X minus itself when Y is None)."""
    if Y is None:
        d, _ = cKDTree(X).query(X, k=2)
        return d[:, 1]
    d, _ = cKDTree(Y).query(X, k=1)
    return d


@dataclass
class PrivacyResult:
    score: float
    alpha: float
    passed: bool
    threshold: float = PRIVACY_THRESHOLD
    n_real: int = 0
    n_synthetic: int = 0
    per_join: dict = field(default_factory=dict)


def nn_privacy(real: np.ndarray, synthetic: np.ndarray, seed: int,
               threshold: float = PRIVACY_THRESHOLD) -> PrivacyResult:
    """Privacy score of encoded synthetic rows against encoded real rows."""
    real = np.asarray(real, dtype=np.float64)
    synthetic = np.asarray(synthetic, dtype=np.float64)
    n = real.shape[0]
    if n < 4:
        raise EmptyTable(f"privacy score needs at least 4 real records, got {n}")
    if synthetic.shape[0] == 0:
        raise EmptyTable("privacy score of an empty synthetic dataset")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    half = n // 2
    d1, d2 = real[perm[:half]], real[perm[half:2 * half]]
    alpha = percentile(_ratio(nn_distance(d1, d2), nn_distance(d1)), 5.0)
    ratios = _ratio(nn_distance(real, synthetic), nn_distance(real))
    score = float(np.mean(ratios < alpha))
    return PrivacyResult(score, alpha, score <= threshold, threshold, n, synthetic.shape[0])


def privacy_score(real: RelationalDataset, synthetic: RelationalDataset, seed: int,
                  secondary: Optional[str] = None, threshold: float = PRIVACY_THRESHOLD) -> PrivacyResult:
    """Score every primary/secondary join (or just ``secondary``); the worst join is reported."""
    if schema_fingerprint(synthetic) != schema_fingerprint(real):
        raise SchemaFingerprintMismatch("synthetic dataset schema differs from the real one")
    secondaries = [secondary] if secondary else [l.secondary for l in real.links]
    results = {}
    for sec in secondaries:
        j_real = join_on_identifier(real, sec)
        j_synth = join_on_identifier(synthetic, sec)
        enc_real, codec = encode_table(j_real)
        enc_synth, _ = encode_table(j_synth, codec, lenient=True)
        results[sec] = nn_privacy(enc_real.matrix, enc_synth.matrix, seed, threshold)
    worst = max(results.values(), key=lambda r: r.score)
    return PrivacyResult(worst.score, worst.alpha, all(r.passed for r in results.values()), threshold,
                         worst.n_real, worst.n_synthetic,
                         {k: {"score": r.score, "alpha": r.alpha, "passed": r.passed,
                              "n_real": r.n_real, "n_synthetic": r.n_synthetic}
                          for k, r in results.items()})


@dataclass
class EvalReport:
    seed: int
    split_fraction: float
    compatibility: CompatibilityResult
    privacy: PrivacyResult
    seeds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        c, p = self.compatibility, self.privacy
        return {
            "format_version": REPORT_VERSION,
            "seed": self.seed,
            "derived_seeds": dict(self.seeds),
            "split_fraction": self.split_fraction,
            "model_compatibility": {
                "target": c.target,
                "secondary": c.secondary,
                "classes": list(c.classes),
                "rows": {"train": c.n_train, "synthetic": c.n_synthetic, "test": c.n_test},
                "metrics": {k: {"real": m.real, "synthetic": m.synthetic, "mc": m.mc, "note": m.note}
                            for k, m in c.metrics.items()},
            },
            "privacy": {
                "score": p.score,
                "alpha": _json_float(p.alpha),
                "threshold": p.threshold,
                "passed": p.passed,
                "rows": {"real": p.n_real, "synthetic": p.n_synthetic},
                "per_join": {k: dict(v, alpha=_json_float(v["alpha"])) for k, v in p.per_join.items()},
            },
        }

    def summary(self) -> str:
        c, p = self.compatibility, self.privacy
        lines = [f"model compatibility (target {c.target!r}, join with {c.secondary!r}):"]
        for k, m in c.metrics.items():
            if m.mc is None:
                lines.append(f"  {k:8s} MC undefined ({m.note})")
            else:
                lines.append(f"  {k:8s} real {m.real:.4f}  synthetic {m.synthetic:.4f}  MC {m.mc:.4f}")
        verdict = "PASS" if p.passed else "FAIL"
        lines.append(f"privacy score {p.score:.4f} (alpha {p.alpha:.4f}, threshold {p.threshold}) {verdict}")
        return "\n".join(lines)


def _json_float(x):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")
