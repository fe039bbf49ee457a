"""Tests for ingestion, STFT preprocessing, batching, synth data, and the
binary instance cache."""

import struct

import numpy as np
import pytest

from stepcontrast import (
    CsvSchema,
    DataError,
    FeatureStats,
    InstanceSequence,
    RawSeries,
    StftConfig,
    SynthConfig,
    load_csv,
    make_batches,
    read_instance_cache,
    regime_templates,
    stft_preprocess,
    synth_generate,
    train_test_split,
    write_instance_cache,
    zscore_normalize,
)
from stepcontrast.data import CACHE_MAGIC, STD_FLOOR, hann_window


class TestRawSeries:
    def test_valid_construction(self):
        s = RawSeries(np.zeros((10, 3)), 50.0, ["a", "b", "c"])
        assert s.samples.shape == (10, 3)
        assert s.sample_rate_hz == 50.0

    def test_rejects_1d(self):
        with pytest.raises(DataError):
            RawSeries(np.zeros(10), 50.0, ["a"])

    def test_rejects_bad_rate(self):
        with pytest.raises(DataError):
            RawSeries(np.zeros((10, 1)), 0.0, ["a"])

    def test_rejects_channel_name_mismatch(self):
        with pytest.raises(DataError):
            RawSeries(np.zeros((10, 2)), 50.0, ["a"])

    def test_rejects_non_finite(self):
        x = np.zeros((10, 1))
        x[3, 0] = np.nan
        with pytest.raises(DataError):
            RawSeries(x, 50.0, ["a"])


class TestLoadCsv:
    def _write(self, path, text):
        path.write_text(text, encoding="utf-8")
        return str(path)

    def test_basic_load_with_rate(self, tmp_path):
        p = self._write(tmp_path / "a.csv", "x,y\n1.0,2.0\n3.0,4.0\n")
        s = load_csv(p, CsvSchema(("x", "y"), sample_rate_hz=50.0))
        np.testing.assert_allclose(s.samples, [[1.0, 2.0], [3.0, 4.0]])
        assert s.sample_rate_hz == 50.0

    def test_rate_inferred_from_time_column(self, tmp_path):
        # 0.02 s deltas -> 50 Hz
        p = self._write(tmp_path / "a.csv",
                        "t,x\n0.00,1\n0.02,2\n0.04,3\n0.06,4\n")
        s = load_csv(p, CsvSchema(("x",), time_column="t"))
        np.testing.assert_allclose(s.sample_rate_hz, 50.0)

    def test_column_subset_and_order(self, tmp_path):
        p = self._write(tmp_path / "a.csv", "a,b,c\n1,2,3\n4,5,6\n")
        s = load_csv(p, CsvSchema(("c", "a"), sample_rate_hz=1.0))
        np.testing.assert_allclose(s.samples, [[3.0, 1.0], [6.0, 4.0]])

    def test_missing_column_named_in_error(self, tmp_path):
        p = self._write(tmp_path / "a.csv", "a,b\n1,2\n")
        with pytest.raises(DataError, match="'z'"):
            load_csv(p, CsvSchema(("z",), sample_rate_hz=1.0))

    def test_bad_cell_names_line_and_column(self, tmp_path):
        p = self._write(tmp_path / "a.csv", "a\n1.0\noops\n")
        with pytest.raises(DataError, match="line 3"):
            load_csv(p, CsvSchema(("a",), sample_rate_hz=1.0))

    def test_empty_file(self, tmp_path):
        p = self._write(tmp_path / "a.csv", "")
        with pytest.raises(DataError):
            load_csv(p, CsvSchema(("a",), sample_rate_hz=1.0))

    def test_no_data_rows(self, tmp_path):
        p = self._write(tmp_path / "a.csv", "a,b\n")
        with pytest.raises(DataError, match="no data rows"):
            load_csv(p, CsvSchema(("a",), sample_rate_hz=1.0))

    def test_schema_needs_rate_or_time(self):
        with pytest.raises(DataError):
            CsvSchema(("a",))


class TestHannWindow:
    def test_closed_form(self):
        w = hann_window(4)
        np.testing.assert_allclose(w, [0.0, 0.5, 1.0, 0.5], atol=1e-15)

    def test_periodic_sum(self):
        # periodic Hann sums to exactly W/2
        for n in (8, 50, 128):
            np.testing.assert_allclose(hann_window(n).sum(), n / 2, rtol=1e-12)


class TestStftPreprocess:
    def test_shapes(self):
        series = RawSeries(np.zeros((1000, 3)), 50.0, ["a", "b", "c"])
        seq = stft_preprocess(series, StftConfig(50, 25))
        assert seq.dim == 3 * 26
        assert seq.n_instances == (1000 - 50) // 25 + 1
        assert seq.instances.dtype == np.float32
        np.testing.assert_allclose(seq.instance_duration_s, 1.0)

    def test_dc_bin_for_constant_signal(self):
        series = RawSeries(np.ones((64, 1)), 16.0, ["a"])
        seq = stft_preprocess(series, StftConfig(16, 16))
        bins = seq.instances.reshape(4, 9)
        # all energy in the DC bin: sum of the Hann window = W/2
        np.testing.assert_allclose(bins[:, 0], 8.0, rtol=1e-6)
        np.testing.assert_allclose(bins[:, 2:], 0.0, atol=1e-5)

    def test_sine_peaks_at_its_bin(self):
        sr, w = 64.0, 32
        t = np.arange(256) / sr
        x = np.sin(2 * np.pi * 8.0 * t)  # bin k = 8*32/64 = 4
        seq = stft_preprocess(RawSeries(x[:, None], sr, ["a"]), StftConfig(w, w))
        mags = seq.instances.reshape(-1, w // 2 + 1)
        assert (mags.argmax(axis=1) == 4).all()

    def test_chunked_equals_direct(self):
        rng = np.random.default_rng(42)
        series = RawSeries(rng.normal(size=(300, 2)), 10.0, ["a", "b"])
        cfg = StftConfig(20, 10)
        a = stft_preprocess(series, cfg)
        b = stft_preprocess(series, cfg, _chunk=3)
        np.testing.assert_array_equal(a.instances, b.instances)

    def test_signal_shorter_than_window(self):
        series = RawSeries(np.zeros((10, 1)), 10.0, ["a"])
        with pytest.raises(DataError):
            stft_preprocess(series, StftConfig(50, 25))


class TestZscoreNormalize:
    def test_standardizes(self, rng):
        seq = InstanceSequence(rng.normal(3.0, 2.0, (500, 4)).astype(np.float32))
        out, stats = zscore_normalize(seq)
        np.testing.assert_allclose(out.instances.mean(axis=0), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.instances.std(axis=0), 1.0, atol=1e-5)

    def test_constant_column_floored(self, rng):
        x = rng.normal(size=(50, 2)).astype(np.float32)
        x[:, 1] = 7.0
        out, stats = zscore_normalize(InstanceSequence(x))
        np.testing.assert_array_equal(out.instances[:, 1], 0.0)
        assert stats.std[1] < STD_FLOOR

    def test_reusing_train_stats(self, rng):
        train = InstanceSequence(rng.normal(5.0, 3.0, (200, 3)).astype(np.float32))
        test = InstanceSequence(rng.normal(5.0, 3.0, (50, 3)).astype(np.float32))
        _, stats = zscore_normalize(train)
        out, stats2 = zscore_normalize(test, stats)
        assert stats2 is stats
        manual = (test.instances.astype(np.float64) - stats.mean) / \
            np.maximum(stats.std, STD_FLOOR)
        np.testing.assert_allclose(out.instances, manual.astype(np.float32))

    def test_stats_dim_mismatch(self, rng):
        seq = InstanceSequence(rng.normal(size=(20, 3)).astype(np.float32))
        bad = FeatureStats(np.zeros(5), np.ones(5))
        with pytest.raises(DataError):
            zscore_normalize(seq, bad)


class TestMakeBatches:
    def test_window_count_and_shapes(self, small_sequence):
        batches = list(make_batches(small_sequence, seq_len=10, batch_size=4,
                                    shuffle_seed=0))
        n_windows = small_sequence.n_instances // 10
        assert sum(b.data.shape[0] for b in batches) == n_windows
        assert all(b.data.shape[1:] == (10, small_sequence.dim) for b in batches)

    def test_partial_final_batch(self, small_sequence):
        batches = list(make_batches(small_sequence, seq_len=10, batch_size=7,
                                    shuffle_seed=0))
        n_windows = small_sequence.n_instances // 10
        assert batches[-1].data.shape[0] == n_windows % 7 or n_windows % 7 == 0

    def test_windows_are_contiguous_slices(self, small_sequence):
        for batch in make_batches(small_sequence, 8, 3, shuffle_seed=1):
            for row, (_, start) in zip(batch.data, batch.source_offsets):
                np.testing.assert_array_equal(
                    row, small_sequence.instances[start:start + 8])

    def test_coverage_disjoint(self, small_sequence):
        starts = [off for b in make_batches(small_sequence, 8, 3, 5)
                  for (_, off) in b.source_offsets]
        assert sorted(starts) == [8 * i for i in range(len(starts))]

    def test_shuffle_determinism(self, small_sequence):
        a = [b.source_offsets for b in make_batches(small_sequence, 8, 3, 9)]
        b = [b.source_offsets for b in make_batches(small_sequence, 8, 3, 9)]
        c = [b.source_offsets for b in make_batches(small_sequence, 8, 3, 10)]
        assert a == b
        assert a != c

    def test_too_short_sequence(self, rng):
        seq = InstanceSequence(rng.normal(size=(5, 2)).astype(np.float32))
        with pytest.raises(DataError):
            list(make_batches(seq, seq_len=10, batch_size=2, shuffle_seed=0))


class TestSynthGenerate:
    def test_labels_cover_all_regimes(self, small_sequence):
        assert set(np.unique(small_sequence.labels)) == {0, 1, 2}

    def test_deterministic_in_seed(self):
        cfg = SynthConfig(seed=3, instances_per_regime_mean=40)
        a, b = synth_generate(cfg), synth_generate(cfg)
        np.testing.assert_array_equal(a.instances, b.instances)
        np.testing.assert_array_equal(a.labels, b.labels)
        c = synth_generate(SynthConfig(seed=4, instances_per_regime_mean=40))
        assert not np.array_equal(a.instances, c.instances)

    def test_templates_distinct(self):
        t = regime_templates(SynthConfig(n_regimes=4, n_channels=16))
        for i in range(4):
            for j in range(i + 1, 4):
                assert np.linalg.norm(t[i] - t[j]) > 0.1 * 0.05

    def test_instance_count_near_mean(self):
        cfg = SynthConfig(n_regimes=4, instances_per_regime_mean=500, seed=0)
        seq = synth_generate(cfg)
        assert 0.7 * 2000 < seq.n_instances < 1.3 * 2000

    def test_class_means_match_templates(self):
        cfg = SynthConfig(n_regimes=2, instances_per_regime_mean=4000,
                          n_channels=8, noise_std=0.05, seed=1)
        seq = synth_generate(cfg)
        templates = regime_templates(cfg)
        for r in range(2):
            mean = seq.instances[seq.labels == r].mean(axis=0)
            np.testing.assert_allclose(mean, templates[r], atol=0.01)


class TestTrainTestSplit:
    def test_chronological_ceil(self, small_sequence):
        train, test = train_test_split(small_sequence, 0.75)
        t = small_sequence.n_instances
        assert train.n_instances == -(-3 * t // 4)  # ceil
        assert train.n_instances + test.n_instances == t
        np.testing.assert_array_equal(
            np.concatenate([train.instances, test.instances]),
            small_sequence.instances)

    def test_fraction_one_gives_no_test(self, small_sequence):
        train, test = train_test_split(small_sequence, 1.0)
        assert test is None
        assert train.n_instances == small_sequence.n_instances

    def test_labels_split_alongside(self, small_sequence):
        train, test = train_test_split(small_sequence, 0.5)
        np.testing.assert_array_equal(
            np.concatenate([train.labels, test.labels]), small_sequence.labels)

    def test_bad_fraction(self, small_sequence):
        for f in (0.0, -0.1, 1.5):
            with pytest.raises(DataError):
                train_test_split(small_sequence, f)


class TestInstanceCache:
    def test_roundtrip_bit_exact(self, small_sequence, tmp_path):
        p = tmp_path / "seq.cache"
        write_instance_cache(small_sequence, p)
        back = read_instance_cache(p)
        np.testing.assert_array_equal(back.instances, small_sequence.instances)
        np.testing.assert_array_equal(back.labels, small_sequence.labels)
        assert back.instances.dtype == np.float32
        assert back.labels.dtype == np.int32

    def test_roundtrip_unlabeled(self, unlabeled_sequence, tmp_path):
        p = tmp_path / "seq.cache"
        write_instance_cache(unlabeled_sequence, p)
        back = read_instance_cache(p)
        assert back.labels is None
        np.testing.assert_array_equal(back.instances, unlabeled_sequence.instances)

    def test_magic_checked(self, small_sequence, tmp_path):
        p = tmp_path / "seq.cache"
        write_instance_cache(small_sequence, p)
        blob = bytearray(p.read_bytes())
        blob[:4] = b"XXXX"
        p.write_bytes(bytes(blob))
        with pytest.raises(DataError, match="not an instance cache"):
            read_instance_cache(p)

    def test_version_checked(self, small_sequence, tmp_path):
        p = tmp_path / "seq.cache"
        write_instance_cache(small_sequence, p)
        blob = bytearray(p.read_bytes())
        blob[4:6] = struct.pack("<H", 99)
        p.write_bytes(bytes(blob))
        with pytest.raises(DataError, match="version"):
            read_instance_cache(p)

    def test_truncation_detected(self, small_sequence, tmp_path):
        p = tmp_path / "seq.cache"
        write_instance_cache(small_sequence, p)
        blob = p.read_bytes()
        p.write_bytes(blob[:-5])
        with pytest.raises(DataError, match="truncated"):
            read_instance_cache(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot open"):
            read_instance_cache(tmp_path / "absent.cache")

    def test_header_layout(self, small_sequence, tmp_path):
        # magic u32, version u16, T u64, D u64, flag u8, little-endian
        p = tmp_path / "seq.cache"
        write_instance_cache(small_sequence, p)
        blob = p.read_bytes()
        assert blob[:4] == CACHE_MAGIC
        version, t_total, d, flag = struct.unpack_from("<HQQB", blob, 4)
        assert (version, t_total, d, flag) == (
            1, small_sequence.n_instances, small_sequence.dim, 1)


class TestInstanceSequenceValidation:
    def test_needs_three_instances(self, rng):
        with pytest.raises(DataError):
            InstanceSequence(rng.normal(size=(2, 4)).astype(np.float32))

    def test_coerces_to_float32(self, rng):
        seq = InstanceSequence(rng.normal(size=(10, 4)))
        assert seq.instances.dtype == np.float32
        assert seq.instances.flags.c_contiguous

    def test_label_length_must_match(self, rng):
        x = rng.normal(size=(10, 4)).astype(np.float32)
        with pytest.raises(DataError):
            InstanceSequence(x, np.zeros(9, dtype=np.int32))
