"""Batch command-line front end.

Subcommands: synth, pretrain, embed, probe, semisup, forecast, anomaly,
baseline. Every command accepts --config (TOML file, or a manifest JSON
from a previous run), --seed, --out-dir, --deterministic, --threads;
explicit flags override config-file values, which override defaults.

Every command writes a manifest JSON carrying the fully resolved config,
the root seed, and sha256 hashes of each artifact it wrote (no
timestamps). Re-running a command from its manifest in deterministic mode
reproduces the artifacts bit for bit. All randomness flows from the root
seed through named sub-seeds (data, init, probe, shuffle).

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric
abort (non-finite gradient/loss).

The --threads knob must take effect before numpy initializes its thread
pools, so this module defers every numpy-touching import until after the
environment is set; --deterministic forces single-threaded fixed-order
mode and zeroes wall-clock fields in run logs and report metadata.
"""

import argparse
import hashlib
import json
import os
import sys

THREAD_ENV_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                   "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS")

_COMMON_DEFAULTS = {"seed": 0, "out_dir": ".", "deterministic": False, "threads": 0}

_DEFAULTS = {
    "synth": {"n_regimes": 4, "instances_per_regime": 500, "n_channels": 16,
              "noise_std": 0.1, "out": "synth.cache"},
    "pretrain": {"data": None, "iterations": "auto", "batch_size": 8,
                 "seq_len": 200, "temperature": 0.5, "variant": "mp_xent",
                 "learning_rate": 1e-3, "weight_decay": 0.01,
                 "hidden_dims": "128,64,32", "output_dim": 320,
                 "normalize": True, "out": "encoder.ckpt"},
    "embed": {"data": None, "checkpoint": None, "seq_len": 200,
              "normalize": True, "out": "embeddings.cache"},
    "probe": {"data": None, "checkpoint": None, "seq_len": 200,
              "train_fraction": 0.75, "epochs": 10, "learning_rate": 1e-3,
              "normalize": True},
    "semisup": {"data": None, "checkpoint": None, "seq_len": 200,
                "train_fraction": 0.75, "epochs": 10, "learning_rate": 1e-3,
                "fractions": "0.05,0.1,0.2", "n_runs": 3, "normalize": True},
    "forecast": {"data": None, "checkpoint": None, "seq_len": 200,
                 "train_fraction": 0.75, "horizons": "1", "target_feature": 0,
                 "validation_fraction": 0.2, "normalize": True},
    "anomaly": {"data": None, "checkpoint": None, "seq_len": 200,
                "train_fraction": 0.75, "variance_retained": 0.9,
                "normal_label": 0, "normalize": True},
    "baseline": {"data": None, "seq_len": 200, "train_fraction": 0.75,
                 "epochs": 10, "learning_rate": 1e-3, "hidden_dims": "128,64,32",
                 "output_dim": 320, "normalize": True},
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stepcontrast",
                     description="Self-supervised time-series representation "
                                 "toolkit: pretraining and downstream evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file or a manifest JSON "
                                        "from a previous run")
        p.add_argument("--seed", type=int, default=None, help="root seed")
        p.add_argument("--out-dir", default=None, help="directory for artifacts")
        p.add_argument("--deterministic", action="store_true", default=None,
                       help="single-threaded fixed-order mode; zeroes wall times")
        p.add_argument("--threads", type=int, default=None,
                       help="thread cap for numeric backends (0 = leave as is)")

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset cache")
    common(p)
    p.add_argument("--n-regimes", type=int, default=None)
    p.add_argument("--instances-per-regime", type=int, default=None)
    p.add_argument("--n-channels", type=int, default=None)
    p.add_argument("--noise-std", type=float, default=None)
    p.add_argument("--out", default=None, help="cache filename within out-dir")

    p = sub.add_parser("pretrain", help="pretrain the encoder on a dataset cache")
    common(p)
    p.add_argument("--data", default=None, help="instance cache path")
    p.add_argument("--iterations", default=None, help="'auto' or a positive int")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seq-len", type=int, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--variant", default=None,
                   choices=["mp_xent", "mp_xent_shuffled", "single_positive",
                            "single_positive_no_neg"])
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--hidden-dims", default=None, help="comma list, e.g. 128,64,32")
    p.add_argument("--output-dim", type=int, default=None)
    p.add_argument("--no-normalize", dest="normalize", action="store_false",
                   default=None)
    p.add_argument("--out", default=None, help="checkpoint filename within out-dir")

    p = sub.add_parser("embed", help="export embeddings in the cache format")
    common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--seq-len", type=int, default=None)
    p.add_argument("--no-normalize", dest="normalize", action="store_false",
                   default=None)
    p.add_argument("--out", default=None)

    for name, extra in (("probe", ()), ("semisup", ("fractions", "n_runs"))):
        p = sub.add_parser(name, help=f"linear probe evaluation ({name})")
        common(p)
        p.add_argument("--data", default=None)
        p.add_argument("--checkpoint", default=None)
        p.add_argument("--seq-len", type=int, default=None)
        p.add_argument("--train-fraction", type=float, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--learning-rate", type=float, default=None)
        p.add_argument("--no-normalize", dest="normalize", action="store_false",
                       default=None)
        if "fractions" in extra:
            p.add_argument("--fractions", default=None, help="comma list of label "
                                                             "fractions in (0,1]")
            p.add_argument("--n-runs", type=int, default=None)

    p = sub.add_parser("forecast", help="ridge forecasting from embeddings")
    common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--seq-len", type=int, default=None)
    p.add_argument("--train-fraction", type=float, default=None)
    p.add_argument("-H", "--horizons", default=None, help="comma list, e.g. 24,48")
    p.add_argument("--target-feature", type=int, default=None,
                   help="raw feature column forecast as the target")
    p.add_argument("--validation-fraction", type=float, default=None)
    p.add_argument("--no-normalize", dest="normalize", action="store_false",
                   default=None)

    p = sub.add_parser("anomaly", help="PCA anomaly scoring on embeddings")
    common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--seq-len", type=int, default=None)
    p.add_argument("--train-fraction", type=float, default=None)
    p.add_argument("--variance-retained", type=float, default=None)
    p.add_argument("--normal-label", type=int, default=None)
    p.add_argument("--no-normalize", dest="normalize", action="store_false",
                   default=None)

    p = sub.add_parser("baseline", help="linear probe on a random-init encoder")
    common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--seq-len", type=int, default=None)
    p.add_argument("--train-fraction", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--hidden-dims", default=None)
    p.add_argument("--output-dim", type=int, default=None)
    p.add_argument("--no-normalize", dest="normalize", action="store_false",
                   default=None)
    return parser


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------

def _load_config_file(path: str) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    text = raw.decode("utf-8")
    if path.endswith(".json") or text.lstrip().startswith("{"):
        data = json.loads(text)
        # a manifest from a previous run: reuse its resolved config
        if isinstance(data, dict) and "config" in data and "command" in data:
            return dict(data["config"])
        return dict(data)
    import tomli
    return tomli.loads(text)


def _resolve_config(ns: argparse.Namespace) -> dict:
    defaults = dict(_COMMON_DEFAULTS)
    defaults.update(_DEFAULTS[ns.command])
    resolved = dict(defaults)
    if ns.config:
        file_cfg = _load_config_file(ns.config)
        unknown = sorted(set(file_cfg) - set(defaults))
        if unknown:
            raise SystemExit(
                f"stepcontrast {ns.command}: unknown config keys {unknown}")
        resolved.update(file_cfg)
    for key in defaults:
        val = getattr(ns, key, None)
        if val is not None:
            resolved[key] = val
    if resolved["deterministic"]:
        resolved["threads"] = 1
    return resolved


def _apply_thread_env(cfg: dict) -> None:
    threads = int(cfg.get("threads") or 0)
    if threads > 0:
        for var in THREAD_ENV_VARS:
            os.environ[var] = str(threads)


def _int_list(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(tok) for tok in str(text).split(",") if tok.strip())


def _float_list(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(tok) for tok in str(text).split(",") if tok.strip())


def _iterations_value(raw):
    if raw == "auto":
        return "auto"
    return int(raw)


def _sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(cfg: dict, command: str, artifacts: list[str],
                    extra: dict | None = None) -> str:
    manifest = {
        "command": command,
        "config": {k: v for k, v in cfg.items()},
        "seed": cfg["seed"],
        "deterministic": bool(cfg["deterministic"]),
        "artifacts": {os.path.basename(p): _sha256_file(p) for p in artifacts},
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(cfg["out_dir"], f"{command}_manifest.json")
    _write_json(path, manifest)
    return path


def _out_path(cfg: dict, name: str) -> str:
    os.makedirs(cfg["out_dir"], exist_ok=True)
    return os.path.join(cfg["out_dir"], name)


def _write_report(cfg: dict, command: str, report) -> list[str]:
    json_path = _out_path(cfg, f"{command}_report.json")
    text_path = _out_path(cfg, f"{command}_report.txt")
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_text_table())
        fh.write("\n")
    return [json_path, text_path]


# ---------------------------------------------------------------------------
# Shared data plumbing
# ---------------------------------------------------------------------------

def _require(cfg: dict, key: str, command: str):
    if not cfg.get(key):
        raise SystemExit(f"stepcontrast {command}: --{key.replace('_', '-')} "
                         f"is required")
    return cfg[key]


def _load_cache(path: str):
    from .data import read_instance_cache
    return read_instance_cache(path)


def _normalize_with_stats(seq, stats_path: str | None, enabled: bool):
    """z-normalize with stored train stats when available, else own stats."""
    from .data import FeatureStats, zscore_normalize
    if not enabled:
        return seq
    if stats_path and os.path.exists(stats_path):
        import numpy as np
        with open(stats_path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        stats = FeatureStats(np.array(payload["mean"]), np.array(payload["std"]))
        seq, _ = zscore_normalize(seq, stats)
        return seq
    seq, _ = zscore_normalize(seq)
    return seq


def _eval_encoder_from_checkpoint(ckpt_path: str):
    from .encoder import set_mode
    from .trainer import load_checkpoint
    state, _ = load_checkpoint(ckpt_path)
    return set_mode(state, "eval")

def _split_and_embed(cfg: dict, command: str):
    """Load cache, normalize, chronological split, embed both sides."""
    from .data import train_test_split
    from .errors import DataError
    from .evaluate import embed_dataset

    data_path = _require(cfg, "data", command)
    ckpt_path = _require(cfg, "checkpoint", command)
    seq = _load_cache(data_path)
    seq = _normalize_with_stats(seq, ckpt_path + ".stats.json", cfg["normalize"])
    train_seq, test_seq = train_test_split(seq, cfg["train_fraction"])
    if test_seq is None:
        raise DataError(f"train_fraction {cfg['train_fraction']} leaves no test rows")
    state = _eval_encoder_from_checkpoint(ckpt_path)
    train_emb, train_labels = embed_dataset(state, train_seq, cfg["seq_len"])
    test_emb, test_labels = embed_dataset(state, test_seq, cfg["seq_len"])
    return train_seq, test_seq, train_emb, train_labels, test_emb, test_labels


def _require_labels(labels, command: str):
    from .errors import DataError
    if labels is None:
        raise DataError(f"{command} needs a labeled dataset cache")
    return labels


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------

def cmd_synth(cfg: dict) -> int:
    from .data import SynthConfig, synth_generate, write_instance_cache
    from .seeding import derive_seed
    synth_cfg = SynthConfig(
        n_regimes=cfg["n_regimes"],
        instances_per_regime_mean=cfg["instances_per_regime"],
        n_channels=cfg["n_channels"],
        noise_std=cfg["noise_std"],
        seed=derive_seed(cfg["seed"], "data"),
    )
    seq = synth_generate(synth_cfg)
    out = _out_path(cfg, cfg["out"])
    write_instance_cache(seq, out)
    _write_manifest(cfg, "synth", [out],
                    extra={"n_instances": seq.n_instances, "dim": seq.dim})
    return 0


def cmd_pretrain(cfg: dict) -> int:
    import numpy as np

    from .data import zscore_normalize
    from .encoder import EncoderConfig
    from .seeding import derive_seed
    from .trainer import TrainConfig, pretrain, save_checkpoint

    seq = _load_cache(_require(cfg, "data", "pretrain"))
    stats = None
    if cfg["normalize"]:
        seq, stats = zscore_normalize(seq)
    enc_cfg = EncoderConfig(
        input_dim=seq.dim,
        hidden_dims=_int_list(cfg["hidden_dims"]),
        output_dim=cfg["output_dim"],
        init_seed=derive_seed(cfg["seed"], "init"),
    )
    train_cfg = TrainConfig(
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        temperature=cfg["temperature"],
        variant=cfg["variant"],
        n_iterations=_iterations_value(cfg["iterations"]),
        weight_decay=cfg["weight_decay"],
        seed=derive_seed(cfg["seed"], "shuffle"),
        seq_len=cfg["seq_len"],
    )
    state, log = pretrain(seq, enc_cfg, train_cfg)

    ckpt_path = _out_path(cfg, cfg["out"])
    save_checkpoint(state, log.final_optimizer, ckpt_path)
    artifacts = [ckpt_path, ckpt_path + ".json"]
    if stats is not None:
        stats_path = ckpt_path + ".stats.json"
        _write_json(stats_path, {"mean": stats.mean.tolist(),
                                 "std": stats.std.tolist()})
        artifacts.append(stats_path)

    zero_wall = bool(cfg["deterministic"])
    log_path = _out_path(cfg, "runlog.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        for rec in log.records:
            fh.write(json.dumps({"iteration": rec.iteration, "loss": rec.loss,
                                 "wall_ms": 0.0 if zero_wall else rec.wall_ms}))
            fh.write("\n")
    artifacts.append(log_path)

    losses = log.losses()
    _write_manifest(cfg, "pretrain", artifacts, extra={
        "n_iterations": len(log.records),
        "final_loss": float(losses[-1]),
        "mean_loss_last_10": float(np.mean(losses[-10:])),
        "total_seconds": 0.0 if zero_wall else log.total_seconds,
    })
    return 0


def cmd_embed(cfg: dict) -> int:
    import numpy as np

    from .data import InstanceSequence, write_instance_cache
    from .evaluate import embed_dataset

    seq = _load_cache(_require(cfg, "data", "embed"))
    ckpt_path = _require(cfg, "checkpoint", "embed")
    seq = _normalize_with_stats(seq, ckpt_path + ".stats.json", cfg["normalize"])
    state = _eval_encoder_from_checkpoint(ckpt_path)
    emb, labels = embed_dataset(state, seq, cfg["seq_len"])
    out = _out_path(cfg, cfg["out"])
    write_instance_cache(
        InstanceSequence(emb.astype(np.float32), labels,
                         instance_duration_s=seq.instance_duration_s), out)
    _write_manifest(cfg, "embed", [out],
                    extra={"n_rows": int(emb.shape[0]), "dim": int(emb.shape[1])})
    return 0


def cmd_probe(cfg: dict) -> int:
    from .evaluate import ProbeConfig, linear_probe
    from .seeding import derive_seed

    _, _, train_emb, train_labels, test_emb, test_labels = \
        _split_and_embed(cfg, "probe")
    _require_labels(train_labels, "probe")
    probe_cfg = ProbeConfig(epochs=cfg["epochs"],
                            learning_rate=cfg["learning_rate"],
                            seed=derive_seed(cfg["seed"], "probe"))
    report = linear_probe(train_emb, train_labels, test_emb, test_labels, probe_cfg)
    artifacts = _write_report(cfg, "probe", report)
    _write_manifest(cfg, "probe", artifacts,
                    extra={"accuracy": report.metrics["accuracy"]})
    return 0


def cmd_semisup(cfg: dict) -> int:
    from .evaluate import EvalReport, ProbeConfig, semi_supervised_eval
    from .seeding import derive_seed

    _, _, train_emb, train_labels, test_emb, test_labels = \
        _split_and_embed(cfg, "semisup")
    _require_labels(train_labels, "semisup")
    probe_cfg = ProbeConfig(epochs=cfg["epochs"],
                            learning_rate=cfg["learning_rate"],
                            seed=derive_seed(cfg["seed"], "probe"))
    fractions = _float_list(cfg["fractions"])
    reports = semi_supervised_eval(train_emb, train_labels, test_emb, test_labels,
                                   fractions, cfg["n_runs"], probe_cfg)
    merged = EvalReport(
        metrics={f"f{frac}:{k}": v for frac, rep in sorted(reports.items())
                 for k, v in rep.metrics.items()},
        metadata={"fractions": list(fractions), "n_runs": cfg["n_runs"],
                  "per_fraction": {str(f): rep.metadata
                                   for f, rep in sorted(reports.items())}})
    artifacts = _write_report(cfg, "semisup", merged)
    _write_manifest(cfg, "semisup", artifacts)
    return 0


def cmd_forecast(cfg: dict) -> int:
    import numpy as np

    from .evaluate import ForecastConfig, ridge_forecast

    train_seq, test_seq, train_emb, _, test_emb, _ = \
        _split_and_embed(cfg, "forecast")
    col = cfg["target_feature"]
    from .errors import DataError
    if not 0 <= col < train_seq.dim:
        raise DataError(f"target_feature {col} out of range for dim {train_seq.dim}")
    train_target = train_seq.instances[:train_emb.shape[0], col].astype(np.float64)
    test_target = test_seq.instances[:test_emb.shape[0], col].astype(np.float64)
    fc_cfg = ForecastConfig(horizons=_int_list(cfg["horizons"]),
                            validation_fraction=cfg["validation_fraction"])
    report = ridge_forecast(train_emb, train_target, test_emb, test_target, fc_cfg)
    artifacts = _write_report(cfg, "forecast", report)
    _write_manifest(cfg, "forecast", artifacts)
    return 0


def cmd_anomaly(cfg: dict) -> int:
    import numpy as np

    from .evaluate import EvalReport, metric_suite, pca_anomaly_fit, \
        pca_anomaly_score
    from .errors import DataError

    _, _, train_emb, train_labels, test_emb, test_labels = \
        _split_and_embed(cfg, "anomaly")
    _require_labels(train_labels, "anomaly")
    normal = int(cfg["normal_label"])
    normal_rows = train_emb[np.asarray(train_labels) == normal]
    if normal_rows.shape[0] < 2:
        raise DataError(f"fewer than 2 train rows carry normal label {normal}")
    model = pca_anomaly_fit(normal_rows, cfg["variance_retained"])
    scores = pca_anomaly_score(model, test_emb)
    y_true = (np.asarray(test_labels) != normal).astype(np.int32)
    metrics, _ = metric_suite(y_true, scores=scores)
    metrics["train_mean_score"] = float(
        np.mean(pca_anomaly_score(model, normal_rows)))
    report = EvalReport(metrics=metrics,
                        metadata={"p": model.p, "normal_label": normal,
                                  "n_normal_train": int(normal_rows.shape[0])})
    artifacts = _write_report(cfg, "anomaly", report)
    _write_manifest(cfg, "anomaly", artifacts, extra={"p": model.p})
    return 0


def cmd_baseline(cfg: dict) -> int:
    from .data import train_test_split, zscore_normalize
    from .encoder import EncoderConfig, init_params, set_mode
    from .errors import DataError
    from .evaluate import ProbeConfig, embed_dataset, linear_probe
    from .seeding import derive_seed

    seq = _load_cache(_require(cfg, "data", "baseline"))
    if cfg["normalize"]:
        seq, _ = zscore_normalize(seq)
    train_seq, test_seq = train_test_split(seq, cfg["train_fraction"])
    if test_seq is None:
        raise DataError(f"train_fraction {cfg['train_fraction']} leaves no test rows")
    enc_cfg = EncoderConfig(input_dim=seq.dim,
                            hidden_dims=_int_list(cfg["hidden_dims"]),
                            output_dim=cfg["output_dim"],
                            init_seed=derive_seed(cfg["seed"], "init"))
    state = set_mode(init_params(enc_cfg), "eval")
    train_emb, train_labels = embed_dataset(state, train_seq, cfg["seq_len"])
    test_emb, test_labels = embed_dataset(state, test_seq, cfg["seq_len"])
    _require_labels(train_labels, "baseline")
    probe_cfg = ProbeConfig(epochs=cfg["epochs"],
                            learning_rate=cfg["learning_rate"],
                            seed=derive_seed(cfg["seed"], "probe"))
    report = linear_probe(train_emb, train_labels, test_emb, test_labels, probe_cfg)
    report.metadata["baseline"] = "random_init"
    artifacts = _write_report(cfg, "baseline", report)
    _write_manifest(cfg, "baseline", artifacts,
                    extra={"baseline": "random_init",
                           "accuracy": report.metrics["accuracy"]})
    return 0


_HANDLERS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "embed": cmd_embed,
    "probe": cmd_probe,
    "semisup": cmd_semisup,
    "forecast": cmd_forecast,
    "anomaly": cmd_anomaly,
    "baseline": cmd_baseline,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = _resolve_config(ns)
    except (OSError, ValueError) as exc:
        print(f"stepcontrast: config error: {exc}", file=sys.stderr)
        return 1
    _apply_thread_env(cfg)

    from .errors import DataError, NonFiniteGradientError
    try:
        return _HANDLERS[ns.command](cfg)
    except NonFiniteGradientError as exc:
        print(f"stepcontrast {ns.command}: numeric abort: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"stepcontrast {ns.command}: data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"stepcontrast {ns.command}: config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
