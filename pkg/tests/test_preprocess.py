import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import iirnotch

from mical.edf import EdfError, EegRecord, SeizureAnnotation
from mical.preprocess import (
    NotchSpec,
    balance,
    balance_spans,
    blockify,
    notch_coefficients,
    notch_filter,
    write_labels_csv,
)


def _rec(seconds, annotations=(), fs=256, n=2, seed=0, samples=None):
    if samples is None:
        samples = np.random.default_rng(seed).standard_normal((n, int(seconds * fs)))
    return EegRecord([f"c{k}" for k in range(len(samples))], samples, float(fs), list(annotations))


def _response(b, a, f, fs):
    z = np.exp(1j * 2 * np.pi * f / fs)
    return abs(np.polyval(b[::-1], 1 / z) / np.polyval(a[::-1], 1 / z))


def _seizure_seconds(rec):
    return sum(a.duration_s for a in rec.annotations)


class TestNotch:
    @pytest.mark.parametrize("f0,q,fs", [(60, 30, 256), (50, 30, 256), (60, 10, 512), (50, 35, 200)])
    def test_matches_independent_design(self, f0, q, fs):
        b, a = notch_coefficients(NotchSpec(f0, q, fs))
        b_ref, a_ref = iirnotch(f0, q, fs)
        np.testing.assert_allclose(b, b_ref, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(a, a_ref, rtol=1e-12, atol=1e-15)

    def test_response_zero_at_centre_unit_at_dc(self):
        b, a = notch_coefficients(NotchSpec())
        assert _response(b, a, 60.0, 256.0) < 1e-12
        assert _response(b, a, 0.0, 256.0) == pytest.approx(1.0, abs=1e-12)
        assert _response(b, a, 128.0, 256.0) == pytest.approx(1.0, abs=1e-12)

    def test_sinusoid_attenuated_30db(self):
        fs = 256
        t = np.arange(20 * fs) / fs
        x = np.sin(2 * np.pi * 60 * t)
        out = notch_filter(_rec(20, samples=np.vstack([x, x])), NotchSpec()).samples[0]
        tail = out[10 * fs:]
        db = 20 * np.log10(np.sqrt(np.mean(tail**2)) / np.sqrt(np.mean(x[10 * fs:] ** 2)))
        assert db <= -30

    def test_dc_passes(self):
        x = np.full((2, 40 * 256), 3.7)
        out = notch_filter(_rec(40, samples=x), NotchSpec()).samples
        np.testing.assert_allclose(out[:, 30 * 256:], 3.7, rtol=1e-6)

    def test_zero_in_zero_out(self):
        out = notch_filter(_rec(2, samples=np.zeros((2, 512))), NotchSpec()).samples
        assert not out.any()

    def test_length_preserved(self):
        rec = _rec(3)
        assert notch_filter(rec, NotchSpec()).samples.shape == rec.samples.shape

    @pytest.mark.parametrize("kwargs", [dict(center_hz=128.0), dict(center_hz=200.0), dict(center_hz=0.0),
                                        dict(quality_q=0.0)])
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ValueError):
            NotchSpec(**kwargs)

    def test_rate_mismatch(self):
        with pytest.raises(ValueError, match="sampled"):
            notch_filter(_rec(2), NotchSpec(fs=512.0))


class TestBalance:
    def test_ratio_twenty_to_one(self):
        rec = _rec(3600, [SeizureAnnotation(1000, 1060)], fs=8, n=2)
        out = balance(rec)
        seizure = _seizure_seconds(out)
        assert seizure == 60
        assert (out.duration_s - seizure) / seizure == 20
        assert out.annotations == [SeizureAnnotation(600, 660)]

    def test_samples_are_the_retained_span(self):
        rec = _rec(400, [SeizureAnnotation(200, 210)], fs=4)
        out = balance(rec)
        np.testing.assert_array_equal(out.samples, rec.samples[:, 100 * 4:310 * 4])

    def test_seizure_at_start_clipped(self):
        rec = _rec(200, [SeizureAnnotation(0, 5)], fs=4)
        out = balance(rec)
        assert out.annotations == [SeizureAnnotation(0, 5)]
        assert out.duration_s == 55

    def test_overlapping_spans_union(self):
        anns = [SeizureAnnotation(100, 110), SeizureAnnotation(150, 160)]
        assert balance_spans(anns, 1000) == [(0, 260)]
        out = balance(_rec(1000, anns, fs=2))
        assert out.duration_s == 260
        assert out.annotations == anns

    def test_disjoint_spans_concatenated(self):
        anns = [SeizureAnnotation(100, 102), SeizureAnnotation(500, 503)]
        rec = _rec(1000, anns, fs=2)
        out = balance(rec)
        assert balance_spans(anns, 1000) == [(80, 122), (470, 533)]
        assert out.annotations == [SeizureAnnotation(20, 22), SeizureAnnotation(72, 75)]
        np.testing.assert_array_equal(out.samples[:, 42 * 2:], rec.samples[:, 470 * 2:533 * 2])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 900), st.integers(1, 40)), min_size=1, max_size=5))
    def test_union_oracle(self, raw):
        duration = 1000
        anns = []
        for start, d in sorted(raw):
            if anns and start < anns[-1].end_s:
                continue
            anns.append(SeizureAnnotation(start, min(start + d, duration)))
        keep = np.zeros(duration, dtype=bool)
        for a in anns:
            keep[max(0, a.start_s - 10 * a.duration_s):min(duration, a.end_s + 10 * a.duration_s)] = True
        out = balance(_rec(duration, anns, fs=1))
        assert out.duration_s == keep.sum()
        assert _seizure_seconds(out) == _seizure_seconds(_rec(duration, anns, fs=1))

    def test_requires_annotation(self):
        with pytest.raises(EdfError):
            balance(_rec(100))


class TestBlockify:
    def test_block_count(self):
        ws = blockify(_rec(100))
        assert len(ws) == 68
        assert ws.block_times[0] == 32 and ws.block_times[-1] == 99

    def test_window_lengths(self):
        ws = blockify(_rec(40, n=3))
        assert ws.cnn_windows.shape == (8, 3, 1024)
        assert ws.mi_windows.shape == (8, 3, 8192)

    def test_label_rule(self):
        ws = blockify(_rec(100, [SeizureAnnotation(50, 52)]))
        assert ws.block_times[ws.labels == 1].tolist() == [51, 52]

    def test_causal_alignment(self):
        rec = _rec(50, n=2)
        ws = blockify(rec)
        fs = ws.fs
        for k in (0, 5, len(ws) - 1):
            t = ws.block_times[k]
            np.testing.assert_array_equal(ws.cnn_windows[k], rec.samples[:, (t - 4) * fs:t * fs])
            np.testing.assert_array_equal(ws.mi_windows[k], rec.samples[:, (t - 32) * fs:t * fs])
            assert ws.cnn_windows[k][:, -1].tolist() == ws.mi_windows[k][:, -1].tolist()
            np.testing.assert_array_equal(ws.cnn_window(k), ws.cnn_windows[k])
            np.testing.assert_array_equal(ws.mi_window(k), ws.mi_windows[k])

    def test_too_short(self):
        with pytest.raises(EdfError, match="shorter"):
            blockify(_rec(31))

    def test_labels_csv(self, tmp_path):
        ws = blockify(_rec(35, [SeizureAnnotation(33, 34)]))
        path = tmp_path / "labels.csv"
        write_labels_csv(path, ws)
        assert path.read_text().splitlines() == ["second,label", "32,0", "33,0", "34,1"]
