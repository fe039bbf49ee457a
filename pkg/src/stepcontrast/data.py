"""Time-series ingestion, STFT preprocessing, batching, and synthetic data.

The unit of everything downstream is the *instance*: one STFT window's
concatenated channel magnitudes, one row of an InstanceSequence. Raw signals
enter as RawSeries (L samples x C channels), leave stft_preprocess as
InstanceSequence (T instances x D features), and reach the trainer as
SequenceBatch tensors (N x seq_len x D).

Feature matrices are float32 (matching the binary cache format exactly, so
cache round-trips are bit-identical); statistics and all downstream compute
run in float64.
"""

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

STD_FLOOR = 1e-8

CACHE_MAGIC = b"CATT"
CACHE_VERSION = 1


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class RawSeries:
    """A raw multichannel signal: L samples x C channels."""

    samples: np.ndarray
    sample_rate_hz: float
    channel_names: list[str]

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise DataError(f"samples must be L x C, got shape {self.samples.shape}")
        l, c = self.samples.shape
        if l < 1 or c < 1:
            raise DataError(f"need L >= 1 and C >= 1, got L={l}, C={c}")
        if not np.isfinite(self.samples).all():
            raise DataError("samples contain non-finite values")
        if not self.sample_rate_hz > 0:
            raise DataError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if len(self.channel_names) != c:
            raise DataError(
                f"{len(self.channel_names)} channel names for {c} channels")


@dataclass(frozen=True)
class StftConfig:
    """Short-time Fourier transform settings. Only Hann windows are supported."""

    window_samples: int
    hop_samples: int
    window_kind: str = "hann"

    def __post_init__(self):
        if self.window_samples < 1:
            raise DataError(f"window_samples must be positive, got {self.window_samples}")
        if not 1 <= self.hop_samples <= self.window_samples:
            raise DataError(
                f"need 1 <= hop_samples <= window_samples, got hop={self.hop_samples}, "
                f"window={self.window_samples}")
        if self.window_kind != "hann":
            raise DataError(f"unsupported window kind {self.window_kind!r}")


@dataclass
class InstanceSequence:
    """T preprocessed instances of dimension D, with optional integer labels."""

    instances: np.ndarray
    labels: np.ndarray | None = None
    instance_duration_s: float = 1.0

    def __post_init__(self):
        self.instances = np.ascontiguousarray(self.instances, dtype=np.float32)
        if self.instances.ndim != 2:
            raise DataError(f"instances must be T x D, got shape {self.instances.shape}")
        t, d = self.instances.shape
        if t < 3:
            raise DataError(f"need T >= 3 (an interior anchor must exist), got T={t}")
        if d < 1:
            raise DataError(f"need D >= 1, got D={d}")
        if not np.isfinite(self.instances).all():
            raise DataError("instances contain non-finite values")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.int32)
            if self.labels.shape != (t,):
                raise DataError(
                    f"labels must have length T={t}, got shape {self.labels.shape}")
        if not self.instance_duration_s > 0:
            raise DataError("instance_duration_s must be positive")

    @property
    def n_instances(self) -> int:
        return self.instances.shape[0]

    @property
    def dim(self) -> int:
        return self.instances.shape[1]


@dataclass
class SequenceBatch:
    """N training sequences of seq_len instances each: an N x T x D tensor.

    source_offsets records where each sequence came from as (series_id,
    start_index) pairs, so coverage can be audited.
    """

    data: np.ndarray
    source_offsets: list[tuple[int, int]]

    def __post_init__(self):
        if self.data.ndim != 3:
            raise DataError(f"batch data must be N x T x D, got shape {self.data.shape}")
        if self.data.shape[0] != len(self.source_offsets):
            raise DataError("one source offset required per sequence")


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic multi-regime dataset settings.

    Each regime has a fixed sinusoidal feature template; instances are
    template + iid Gaussian noise. Regimes appear in round-robin segments
    (segments_per_regime cycles), so a chronological split sees every class
    on both sides. Total length is about n_regimes * instances_per_regime_mean
    regardless of segmentation.
    """

    n_regimes: int = 4
    instances_per_regime_mean: int = 500
    n_channels: int = 16
    noise_std: float = 0.1
    seed: int = 0
    segments_per_regime: int = 4
    template_scale: float = 1.0

    def __post_init__(self):
        if self.n_regimes < 2:
            raise DataError(f"need n_regimes >= 2, got {self.n_regimes}")
        if self.instances_per_regime_mean < 1:
            raise DataError("instances_per_regime_mean must be positive")
        if self.n_channels < 1:
            raise DataError("n_channels must be positive")
        if self.noise_std < 0:
            raise DataError("noise_std must be nonnegative")
        if self.segments_per_regime < 1:
            raise DataError("segments_per_regime must be positive")


@dataclass
class FeatureStats:
    """Frozen per-feature mean/std used by zscore_normalize."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DataError("stats mean/std must be 1-D arrays of equal length")


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for load_csv.

    channel_columns: names of the >= 1 numeric signal columns.
    time_column: optional; when given and sample_rate_hz is None, the rate
    is inferred from the median timestamp delta.
    """

    channel_columns: tuple[str, ...]
    time_column: str | None = None
    sample_rate_hz: float | None = None

    def __post_init__(self):
        if len(self.channel_columns) < 1:
            raise DataError("schema needs at least one channel column")
        if self.time_column is None and self.sample_rate_hz is None:
            raise DataError("schema needs a time column or an explicit sample rate")


def load_csv(path, schema: CsvSchema) -> RawSeries:
    """Load a header-required UTF-8 CSV into a RawSeries (rows in file order)."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        col_idx = {}
        for name in schema.channel_columns:
            if name not in header:
                raise DataError(f"{path}: channel column {name!r} not in header {header}")
            col_idx[name] = header.index(name)
        time_idx = None
        if schema.time_column is not None:
            if schema.time_column not in header:
                raise DataError(f"{path}: time column {schema.time_column!r} not in header")
            time_idx = header.index(schema.time_column)

        rows: list[list[float]] = []
        times: list[float] = []
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            row = []
            for name in schema.channel_columns:
                if col_idx[name] >= len(cells):
                    raise DataError(f"{path}: line {lineno}: too few cells")
                cell = cells[col_idx[name]]
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}, column {name!r}: "
                        f"cannot parse {cell!r} as a number") from None
                if not math.isfinite(value):
                    raise DataError(
                        f"{path}: line {lineno}, column {name!r}: non-finite value")
                row.append(value)
            rows.append(row)
            if time_idx is not None and schema.sample_rate_hz is None:
                try:
                    times.append(float(cells[time_idx]))
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}, column {schema.time_column!r}: "
                        f"cannot parse {cells[time_idx]!r} as a timestamp") from None
        if not rows:
            raise DataError(f"{path}: no data rows")

    if schema.sample_rate_hz is not None:
        rate = float(schema.sample_rate_hz)
    else:
        deltas = np.diff(np.asarray(times, dtype=np.float64))
        deltas = deltas[deltas > 0]
        if deltas.size == 0:
            raise DataError(f"{path}: cannot infer sample rate from time column")
        rate = 1.0 / float(np.median(deltas))

    return RawSeries(np.asarray(rows, dtype=np.float64), rate,
                     list(schema.channel_columns))


# ---------------------------------------------------------------------------
# STFT preprocessing
# ---------------------------------------------------------------------------

def hann_window(window_samples: int) -> np.ndarray:
    """Periodic Hann window: w[n] = 0.5*(1 - cos(2*pi*n/W)), n = 0..W-1."""
    n = np.arange(window_samples, dtype=np.float64)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / window_samples))


def stft_preprocess(series: RawSeries, cfg: StftConfig,
                    _chunk: int = 65536) -> InstanceSequence:
    """Slide a Hann window over every channel and emit magnitude spectra.

    Each window yields floor(W/2)+1 magnitude bins per channel; channel bins
    are concatenated, so D = C*(floor(W/2)+1) and
    T = floor((L - W)/hop) + 1. Magnitude (not power, not log) is emitted.
    """
    w, hop = cfg.window_samples, cfg.hop_samples
    l, c = series.samples.shape
    if l < w:
        raise DataError(f"signal length {l} shorter than window {w}")
    t_total = (l - w) // hop + 1
    bins = w // 2 + 1
    window = hann_window(w)

    feats = np.empty((t_total, c * bins), dtype=np.float32)
    # Frame extraction is chunked so the T x W index block stays small.
    for start in range(0, t_total, _chunk):
        stop = min(start + _chunk, t_total)
        idx = (np.arange(start, stop) * hop)[:, None] + np.arange(w)[None, :]
        for ch in range(c):
            frames = series.samples[idx, ch] * window
            mag = np.abs(np.fft.rfft(frames, axis=1))
            feats[start:stop, ch * bins:(ch + 1) * bins] = mag
    return InstanceSequence(feats, labels=None,
                            instance_duration_s=w / series.sample_rate_hz)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def zscore_normalize(seq: InstanceSequence,
                     stats: FeatureStats | None = None
                     ) -> tuple[InstanceSequence, FeatureStats]:
    """Standardize each feature column; returns the stats actually used.

    When stats is None they are computed from seq itself. Stds below
    STD_FLOOR are floored, so constant columns map to zero rather than
    dividing by zero.
    """
    x = seq.instances.astype(np.float64)
    if stats is None:
        stats = FeatureStats(x.mean(axis=0), x.std(axis=0))
    elif stats.mean.shape[0] != seq.dim:
        raise DataError(
            f"stats dimension {stats.mean.shape[0]} != feature dimension {seq.dim}")
    denom = np.maximum(stats.std, STD_FLOOR)
    normalized = (x - stats.mean) / denom
    out = InstanceSequence(normalized.astype(np.float32), seq.labels,
                           seq.instance_duration_s)
    return out, stats


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

def make_batches(seq: InstanceSequence, seq_len: int, batch_size: int,
                 shuffle_seed: int, series_id: int = 0):
    """Yield SequenceBatch tensors built from shuffled contiguous windows.

    The instance axis is cut into non-overlapping windows of seq_len
    (trailing remainder dropped), window order is shuffled by shuffle_seed,
    and windows are grouped into batches of batch_size (the final partial
    batch is emitted). Temporal order inside each window is preserved.
    """
    if seq_len < 3:
        raise DataError(f"seq_len must be >= 3, got {seq_len}")
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    t_total = seq.n_instances
    if t_total < seq_len:
        raise DataError(f"sequence has {t_total} instances, shorter than seq_len={seq_len}")
    n_windows = t_total // seq_len
    order = np.random.default_rng(shuffle_seed).permutation(n_windows)
    for group_start in range(0, n_windows, batch_size):
        group = order[group_start:group_start + batch_size]
        data = np.stack([seq.instances[w * seq_len:(w + 1) * seq_len] for w in group])
        offsets = [(series_id, int(w) * seq_len) for w in group]
        yield SequenceBatch(data, offsets)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def regime_templates(cfg: SynthConfig) -> np.ndarray:
    """Fixed per-regime feature templates: distinct sinusoids over the feature axis."""
    d = np.arange(cfg.n_channels, dtype=np.float64)
    templates = np.empty((cfg.n_regimes, cfg.n_channels), dtype=np.float64)
    for r in range(cfg.n_regimes):
        freq = r + 1
        amplitude = cfg.template_scale * (1.0 + 0.25 * r)
        phase = 0.7 * r
        templates[r] = amplitude * np.sin(
            2.0 * np.pi * freq * (d + 1) / cfg.n_channels + phase)
    return templates


def synth_generate(cfg: SynthConfig) -> InstanceSequence:
    """Generate a labeled round-robin sequence of regime segments.

    Deterministic in cfg.seed, bit-for-bit: segment lengths are drawn first,
    then one noise block for the whole sequence.
    """
    rng = np.random.default_rng(cfg.seed)
    templates = regime_templates(cfg)
    # Mean segment length so each regime totals ~instances_per_regime_mean.
    seg_mean = max(1, round(cfg.instances_per_regime_mean / cfg.segments_per_regime))
    lo, hi = max(1, seg_mean // 2), max(2, seg_mean + seg_mean // 2)
    labels: list[np.ndarray] = []
    for _cycle in range(cfg.segments_per_regime):
        for r in range(cfg.n_regimes):
            length = int(rng.integers(lo, hi + 1))
            labels.append(np.full(length, r, dtype=np.int32))
    label_vec = np.concatenate(labels)
    noise = rng.normal(0.0, cfg.noise_std, size=(label_vec.shape[0], cfg.n_channels))
    instances = templates[label_vec] + noise
    return InstanceSequence(instances.astype(np.float32), label_vec,
                            instance_duration_s=1.0)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def train_test_split(seq: InstanceSequence, train_fraction: float
                     ) -> tuple[InstanceSequence, InstanceSequence | None]:
    """Chronological split: first ceil(fraction*T) instances are train.

    With fraction 1.0 the test side is None (an InstanceSequence cannot be
    empty).
    """
    if not 0.0 < train_fraction <= 1.0:
        raise DataError(f"train_fraction must be in (0, 1], got {train_fraction}")
    t_total = seq.n_instances
    n_train = math.ceil(train_fraction * t_total)
    train = InstanceSequence(seq.instances[:n_train],
                             None if seq.labels is None else seq.labels[:n_train],
                             seq.instance_duration_s)
    if n_train == t_total:
        return train, None
    test = InstanceSequence(seq.instances[n_train:],
                            None if seq.labels is None else seq.labels[n_train:],
                            seq.instance_duration_s)
    return train, test


# ---------------------------------------------------------------------------
# Binary cache format
# ---------------------------------------------------------------------------
# Layout (little-endian): magic "CATT", version u16, T u64, D u64,
# label flag u8, then T*D row-major float32, then T int32 labels if flagged.

def write_instance_cache(seq: InstanceSequence, path) -> None:
    has_labels = seq.labels is not None
    t_total, d = seq.instances.shape
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<HQQB", CACHE_VERSION, t_total, d, int(has_labels)))
        fh.write(np.ascontiguousarray(seq.instances, dtype="<f4").tobytes())
        if has_labels:
            fh.write(np.ascontiguousarray(seq.labels, dtype="<i4").tobytes())


def read_instance_cache(path, instance_duration_s: float = 1.0) -> InstanceSequence:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    header_len = len(CACHE_MAGIC) + struct.calcsize("<HQQB")
    if len(blob) < header_len or blob[:4] != CACHE_MAGIC:
        raise DataError(f"{path}: not an instance cache file")
    version, t_total, d, flag = struct.unpack_from("<HQQB", blob, 4)
    if version != CACHE_VERSION:
        raise DataError(f"{path}: unsupported cache version {version}")
    need = header_len + 4 * t_total * d + (4 * t_total if flag else 0)
    if len(blob) != need:
        raise DataError(f"{path}: truncated or oversized cache "
                        f"({len(blob)} bytes, expected {need})")
    offset = header_len
    instances = np.frombuffer(blob, dtype="<f4", count=t_total * d,
                              offset=offset).reshape(t_total, d)
    labels = None
    if flag:
        offset += 4 * t_total * d
        labels = np.frombuffer(blob, dtype="<i4", count=t_total, offset=offset)
    return InstanceSequence(instances.copy(),
                            None if labels is None else labels.copy(),
                            instance_duration_s)
