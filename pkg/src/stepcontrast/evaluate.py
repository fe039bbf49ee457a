"""Downstream evaluations on frozen embeddings.

Four protocols, all operating on per-instance embedding rows produced by
embed_dataset (eval-mode encoder, ordered non-overlapping windows):

  * linear_probe: softmax regression trained with AdamW (no weight decay)
    on frozen embeddings; classification metrics.
  * semi_supervised_eval: the probe on label subsamples at given fractions,
    repeated n_runs times with derived subsample seeds; mean/std metrics.
  * ridge_forecast: closed-form ridge from embedding at time t to a scalar
    target at t+H, alpha chosen on a chronological validation split.
  * pca_anomaly_fit/score: PCA on normal rows, score = sum over retained
    components of (projection^2 / eigenvalue).

metric_suite picks the metric family from the prediction dtype: integer
predictions get classification metrics (macro over the union of true and
predicted labels, zero-division reads as 0), float predictions get MSE/MAE,
and scores get area under the precision-recall curve.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import InstanceSequence
from .encoder import EncoderState, forward
from .errors import DataError
from .seeding import derive_seed
from .trainer import TrainConfig, adamw_step, init_optimizer

DEFAULT_ALPHA_GRID = (0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0,
                      100.0, 200.0, 500.0, 1000.0)
EIGVAL_FLOOR = 1e-10
TARGET_STD_FLOOR = 1e-8


@dataclass(frozen=True)
class ProbeConfig:
    epochs: int = 10
    learning_rate: float = 1e-3
    label_fraction: float = 1.0
    n_runs: int = 1
    seed: int = 0
    batch_size: int = 256

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.label_fraction <= 1.0:
            raise ValueError(
                f"label_fraction must be in (0, 1], got {self.label_fraction}")
        if self.n_runs < 1:
            raise ValueError(f"n_runs must be >= 1, got {self.n_runs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class ForecastConfig:
    horizons: tuple[int, ...] = (1,)
    ridge_alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID
    validation_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        object.__setattr__(self, "ridge_alpha_grid",
                           tuple(float(a) for a in self.ridge_alpha_grid))
        if not self.horizons or any(h < 1 for h in self.horizons):
            raise ValueError(f"horizons must be positive ints, got {self.horizons}")
        if len(self.ridge_alpha_grid) == 0:
            raise ValueError("ridge_alpha_grid must not be empty")
        if any(a < 0 for a in self.ridge_alpha_grid):
            raise ValueError(f"alphas must be nonnegative, got {self.ridge_alpha_grid}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError(
                f"validation_fraction must be in (0, 1), got {self.validation_fraction}")


@dataclass
class AnomalyModel:
    mean: np.ndarray          # (F,)
    eigvecs: np.ndarray       # (F, p), columns are retained components
    eigvals: np.ndarray       # (p,), descending, nonnegative
    p: int


@dataclass
class EvalReport:
    metrics: dict[str, float]
    per_class: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {"metrics": self.metrics,
                   "per_class": {str(k): v for k, v in self.per_class.items()},
                   "metadata": self.metadata}
        return json.dumps(payload, sort_keys=True, indent=2)

    def to_text_table(self) -> str:
        keys = sorted(self.metrics)
        width = max((len(k) for k in keys), default=6)
        lines = [f"{k.ljust(width)}  {self.metrics[k]:.6f}" for k in keys]
        return "\n".join(lines)


def embed_dataset(state: EncoderState, seq: InstanceSequence, seq_len: int,
                  max_windows_per_batch: int = 64
                  ) -> tuple[np.ndarray, np.ndarray | None]:
    """Embed every instance via ordered non-overlapping windows (eval mode).

    A trailing remainder shorter than seq_len is dropped, so the output has
    (n_instances // seq_len) * seq_len rows, aligned with the input order.
    """
    if state.mode != "eval":
        raise DataError("embed_dataset requires the encoder in eval mode")
    if seq_len < 3:
        raise DataError(f"seq_len must be >= 3, got {seq_len}")
    n_win = seq.n_instances // seq_len
    if n_win == 0:
        raise DataError(
            f"sequence has {seq.n_instances} instances, need at least {seq_len}")
    used = n_win * seq_len
    windows = seq.instances[:used].reshape(n_win, seq_len, seq.dim)
    chunks = []
    for start in range(0, n_win, max_windows_per_batch):
        z, _ = forward(state, windows[start:start + max_windows_per_batch])
        chunks.append(z.reshape(-1, z.shape[-1]))
    emb = np.concatenate(chunks, axis=0)
    labels = None if seq.labels is None else seq.labels[:used].copy()
    return emb, labels


# ---------------------------------------------------------------------------
# Linear probe
# ---------------------------------------------------------------------------

def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def train_softmax_probe(train_x: np.ndarray, train_y: np.ndarray,
                        cfg: ProbeConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fit softmax regression with AdamW; returns (classes, weight, bias)."""
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y)
    if train_x.ndim != 2 or train_x.shape[0] != train_y.shape[0]:
        raise DataError("probe inputs must be (n, F) embeddings with n labels")
    classes = np.unique(train_y)
    if classes.size < 2:
        raise DataError(f"probe needs at least 2 classes, got {classes.size}")
    n, f = train_x.shape
    k = classes.size
    index_of = {c: i for i, c in enumerate(classes)}
    y_idx = np.array([index_of[c] for c in train_y])

    params = {"weight": np.zeros((k, f)), "bias": np.zeros(k)}
    opt = init_optimizer(params)
    opt_cfg = TrainConfig(learning_rate=cfg.learning_rate, weight_decay=0.0)
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(derive_seed(cfg.seed, "probe-shuffle", epoch))
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            xb, yb = train_x[sel], y_idx[sel]
            probs = _softmax(xb @ params["weight"].T + params["bias"])
            probs[np.arange(sel.size), yb] -= 1.0
            probs /= sel.size
            grads = {"weight": probs.T @ xb, "bias": probs.sum(axis=0)}
            adamw_step(params, grads, opt, opt_cfg)
    return classes, params["weight"], params["bias"]


def linear_probe(train_emb: np.ndarray, train_labels: np.ndarray,
                 test_emb: np.ndarray, test_labels: np.ndarray,
                 cfg: ProbeConfig | None = None) -> EvalReport:
    """Softmax regression on frozen embeddings; classification metrics on test."""
    cfg = cfg or ProbeConfig()
    classes, weight, bias = train_softmax_probe(train_emb, train_labels, cfg)
    test_emb = np.asarray(test_emb, dtype=np.float64)
    logits = test_emb @ weight.T + bias
    y_pred = classes[np.argmax(logits, axis=1)]
    metrics, per_class = metric_suite(np.asarray(test_labels), y_pred=y_pred)
    return EvalReport(metrics=metrics, per_class=per_class,
                      metadata={"n_train": int(np.asarray(train_labels).shape[0]),
                                "n_test": int(np.asarray(test_labels).shape[0]),
                                "n_classes": int(classes.size),
                                "epochs": cfg.epochs})


def semi_supervised_eval(train_emb: np.ndarray, train_labels: np.ndarray,
                         test_emb: np.ndarray, test_labels: np.ndarray,
                         fractions: tuple[float, ...], n_runs: int,
                         cfg: ProbeConfig | None = None) -> dict[float, EvalReport]:
    """Probe on label subsamples; mean/std metrics over n_runs per fraction.

    Subsample indices are drawn without replacement with a seed derived from
    (cfg.seed, fraction index, run) and sorted ascending, so fraction 1.0
    with one run reproduces linear_probe bit for bit. Redraws (up to 100)
    handle subsamples that miss a class.
    """
    cfg = cfg or ProbeConfig()
    if n_runs < 1:
        raise DataError(f"n_runs must be >= 1, got {n_runs}")
    train_labels = np.asarray(train_labels)
    n = train_labels.shape[0]
    out: dict[float, EvalReport] = {}
    for fi, frac in enumerate(fractions):
        if not 0.0 < frac <= 1.0:
            raise DataError(f"fractions must be in (0, 1], got {frac}")
        k = min(n, max(2, int(round(frac * n))))
        run_metrics: list[dict[str, float]] = []
        for run in range(n_runs):
            rng = np.random.default_rng(derive_seed(cfg.seed, "subsample", fi, run))
            for attempt in range(100):
                idx = np.sort(rng.choice(n, size=k, replace=False))
                if np.unique(train_labels[idx]).size >= 2:
                    break
            else:
                raise DataError(
                    f"could not draw a subsample with 2 classes at fraction {frac}")
            rep = linear_probe(train_emb[idx], train_labels[idx],
                               test_emb, test_labels, cfg)
            run_metrics.append(rep.metrics)
        keys = sorted(run_metrics[0])
        agg = {}
        for key in keys:
            vals = np.array([m[key] for m in run_metrics])
            agg[f"{key}_mean"] = float(vals.mean())
            agg[f"{key}_std"] = float(vals.std())
        out[frac] = EvalReport(
            metrics=agg,
            metadata={"fraction": frac, "n_runs": n_runs, "subsample_size": int(k),
                      "runs": run_metrics})
    return out


# ---------------------------------------------------------------------------
# Ridge forecasting
# ---------------------------------------------------------------------------

def _ridge_solve(x: np.ndarray, y: np.ndarray, alpha: float
                 ) -> tuple[np.ndarray, float]:
    """Centered ridge: returns (beta, intercept)."""
    x_mean = x.mean(axis=0)
    y_mean = y.mean()
    xc = x - x_mean
    yc = y - y_mean
    gram = xc.T @ xc
    gram[np.diag_indices_from(gram)] += alpha
    beta = np.linalg.solve(gram, xc.T @ yc)
    return beta, float(y_mean - x_mean @ beta)


def _horizon_pairs(emb: np.ndarray, target: np.ndarray, horizon: int
                   ) -> tuple[np.ndarray, np.ndarray]:
    n = min(emb.shape[0], target.shape[0])
    if n - horizon < 1:
        raise DataError(
            f"series of length {n} has no complete pairs at horizon {horizon}")
    return emb[:n - horizon], target[horizon:n]


def ridge_forecast(train_emb: np.ndarray, train_target: np.ndarray,
                   test_emb: np.ndarray, test_target: np.ndarray,
                   cfg: ForecastConfig | None = None) -> EvalReport:
    """Ridge regression from embedding at t to the target at t+H, per horizon.

    Targets are z-normalized with train statistics (a constant train target
    maps to exactly zero, giving zero coefficients and zero error). For each
    horizon the alpha is picked by MSE on the chronologically last
    validation_fraction of train pairs (ties keep the earliest grid entry),
    then the model is refit on all train pairs.
    """
    cfg = cfg or ForecastConfig()
    train_emb = np.asarray(train_emb, dtype=np.float64)
    test_emb = np.asarray(test_emb, dtype=np.float64)
    train_target = np.asarray(train_target, dtype=np.float64).ravel()
    test_target = np.asarray(test_target, dtype=np.float64).ravel()

    t_mean = float(train_target.mean()) if train_target.size else 0.0
    t_std = float(train_target.std()) if train_target.size else 0.0
    scale = t_std if t_std > TARGET_STD_FLOOR else 1.0
    train_norm = (train_target - t_mean) / scale
    test_norm = (test_target - t_mean) / scale
    if t_std <= TARGET_STD_FLOOR:
        train_norm = np.zeros_like(train_norm)

    metrics: dict[str, float] = {}
    chosen: dict[str, float] = {}
    for horizon in cfg.horizons:
        x_all, y_all = _horizon_pairs(train_emb, train_norm, horizon)
        n_pairs = x_all.shape[0]
        n_val = max(1, int(round(cfg.validation_fraction * n_pairs)))
        n_fit = n_pairs - n_val
        if n_fit < 1:
            raise DataError(
                f"horizon {horizon}: {n_pairs} train pairs cannot support a "
                f"validation split of {n_val}")
        best_alpha, best_mse = None, math.inf
        for alpha in cfg.ridge_alpha_grid:
            beta, b0 = _ridge_solve(x_all[:n_fit], y_all[:n_fit], alpha)
            resid = x_all[n_fit:] @ beta + b0 - y_all[n_fit:]
            mse = float(np.mean(resid ** 2))
            if mse < best_mse:
                best_alpha, best_mse = alpha, mse
        beta, b0 = _ridge_solve(x_all, y_all, best_alpha)
        x_test, y_test = _horizon_pairs(test_emb, test_norm, horizon)
        resid = x_test @ beta + b0 - y_test
        metrics[f"mse_h{horizon}"] = float(np.mean(resid ** 2))
        metrics[f"mae_h{horizon}"] = float(np.mean(np.abs(resid)))
        chosen[str(horizon)] = best_alpha
    metrics["mse_mean"] = float(np.mean([metrics[f"mse_h{h}"] for h in cfg.horizons]))
    metrics["mae_mean"] = float(np.mean([metrics[f"mae_h{h}"] for h in cfg.horizons]))
    return EvalReport(metrics=metrics,
                      metadata={"chosen_alphas": chosen,
                                "horizons": list(cfg.horizons),
                                "target_mean": t_mean, "target_std": t_std})


# ---------------------------------------------------------------------------
# PCA anomaly scoring
# ---------------------------------------------------------------------------

def pca_anomaly_fit(normal_emb: np.ndarray, variance_retained: float = 0.9
                    ) -> AnomalyModel:
    """PCA on normal rows; keeps the smallest p with cumulative variance
    fraction >= variance_retained (within 1e-12)."""
    if not 0.0 < variance_retained <= 1.0:
        raise DataError(
            f"variance_retained must be in (0, 1], got {variance_retained}")
    x = np.asarray(normal_emb, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError("pca_anomaly_fit needs a 2-D array with at least 2 rows")
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    total = eigvals.sum()
    if total <= 0.0:
        raise DataError("normal embeddings have zero variance")
    frac = np.cumsum(eigvals) / total
    p = int(np.argmax(frac >= variance_retained - 1e-12)) + 1
    return AnomalyModel(mean=mean, eigvecs=eigvecs[:, :p].copy(),
                        eigvals=eigvals[:p].copy(), p=p)


def pca_anomaly_score(model: AnomalyModel, rows: np.ndarray) -> np.ndarray:
    """Variance-normalized squared projection onto retained components."""
    x = np.asarray(rows, dtype=np.float64)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.mean.shape[0]:
        raise DataError(
            f"rows have dim {x.shape[1]}, model expects {model.mean.shape[0]}")
    y = (x - model.mean) @ model.eigvecs
    scores = np.sum(y ** 2 / np.maximum(model.eigvals, EIGVAL_FLOOR), axis=1)
    return scores[0] if squeeze else scores


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def average_precision(y_true: np.ndarray, scores: np.ndarray) -> float:
    """Area under the precision-recall curve via step interpolation.

    AP = sum_i (R_i - R_{i-1}) * P_i over distinct descending score
    thresholds.
    """
    y_true = np.asarray(y_true).ravel()
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if y_true.shape != scores.shape:
        raise DataError("y_true and scores must have the same length")
    if not np.isin(y_true, (0, 1)).all():
        raise DataError("AUC-PR needs binary labels in {0, 1}")
    n_pos = int(y_true.sum())
    if n_pos == 0:
        raise DataError("AUC-PR undefined with no positive labels")
    order = np.argsort(-scores, kind="stable")
    y_sorted = y_true[order]
    s_sorted = scores[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(1 - y_sorted)
    # evaluate only at the last index of each distinct threshold
    last = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    prev_recall = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev_recall) * precision))


def metric_suite(y_true: np.ndarray, y_pred: np.ndarray | None = None,
                 scores: np.ndarray | None = None) -> tuple[dict, dict]:
    """Dispatch on prediction type; returns (metrics, per_class).

    Integer y_pred: accuracy plus macro precision/recall/F1 over the union
    of true and predicted labels (empty denominators read as 0). Float
    y_pred: MSE and MAE. scores: AUC-PR on binary y_true.
    """
    y_true = np.asarray(y_true)
    if scores is not None:
        return {"auc_pr": average_precision(y_true, scores)}, {}
    if y_pred is None:
        raise DataError("metric_suite needs y_pred or scores")
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise DataError(
            f"shape mismatch: y_true {y_true.shape} vs y_pred {y_pred.shape}")
    if y_true.size == 0:
        raise DataError("metric_suite got empty inputs")
    if np.issubdtype(y_pred.dtype, np.floating):
        err = y_pred.astype(np.float64) - y_true.astype(np.float64)
        return {"mse": float(np.mean(err ** 2)),
                "mae": float(np.mean(np.abs(err)))}, {}
    if not np.issubdtype(y_pred.dtype, np.integer):
        raise DataError(f"unsupported y_pred dtype {y_pred.dtype}")

    labels = np.union1d(np.unique(y_true), np.unique(y_pred))
    per_class = {}
    precisions, recalls, f1s = [], [], []
    for lab in labels:
        tp = int(np.sum((y_pred == lab) & (y_true == lab)))
        fp = int(np.sum((y_pred == lab) & (y_true != lab)))
        fn = int(np.sum((y_pred != lab) & (y_true == lab)))
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        per_class[int(lab)] = {"precision": prec, "recall": rec, "f1": f1,
                               "support": int(np.sum(y_true == lab))}
        precisions.append(prec)
        recalls.append(rec)
        f1s.append(f1)
    metrics = {
        "accuracy": float(np.mean(y_pred == y_true)),
        "macro_precision": float(np.mean(precisions)),
        "macro_recall": float(np.mean(recalls)),
        "macro_f1": float(np.mean(f1s)),
    }
    return metrics, per_class
