from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mical.edf import (
    EdfError,
    EegRecord,
    SeizureAnnotation,
    SignalSpec,
    common_channels,
    parse_edf,
    parse_summary,
    read_edf,
    read_header,
    record_to_edf,
    select_channels,
    usable_labels,
    write_edf,
)


def _record(n_channels=3, seconds=4, fs=256, seed=0, labels=None):
    rng = np.random.default_rng(seed)
    return EegRecord(
        channels=labels or [f"C{k}" for k in range(n_channels)],
        samples=rng.normal(0, 50, (n_channels, seconds * fs)),
        fs=float(fs),
    )


def _patch(data, offset, text):
    data = bytearray(data)
    data[offset:offset + len(text)] = text.encode("ascii")
    return bytes(data)


class TestDigitalDecoding:
    def test_twos_complement_minimum(self):
        edf = record_to_edf(_record(2, 1))
        raw = bytearray(edf.to_bytes())
        hb = edf.header.header_bytes
        raw[hb:hb + 2] = bytes([0x00, 0x80])
        parsed = read_edf(bytes(raw))
        assert parsed.digital[0][0] == -32768

    def test_num_signals_space_padded(self):
        edf = record_to_edf(_record(23, 1))
        data = edf.to_bytes()
        assert data[252:256] == b"23  "
        data = _patch(data, 252, "  23")
        assert read_edf(data).header.num_signals == 23

    def test_rate_from_samples_per_record(self):
        rec = parse_edf(write_edf(_record(2, 3)))
        assert rec.fs == 256.0

    def test_linear_calibration(self):
        spec = SignalSpec("x", -100.0, 100.0, -32768, 32767, 1)
        assert spec.to_physical(-32768) == -100.0
        assert spec.to_physical(32767) == pytest.approx(100.0, abs=1e-12)
        mid = spec.to_physical(0)
        assert mid == pytest.approx(-100.0 + 32768 * 200.0 / 65535, abs=1e-12)


class TestRoundTrip:
    def test_bytes_reserialize_exactly(self):
        data = write_edf(_record(4, 5))
        assert read_edf(data).to_bytes() == data

    @settings(max_examples=25, deadline=None)
    @given(
        n=st.integers(2, 5),
        seconds=st.integers(1, 4),
        scale=st.floats(1e-2, 1e4),
        seed=st.integers(0, 10_000),
    )
    def test_samples_within_quantization(self, n, seconds, scale, seed):
        rec = _record(n, seconds, seed=seed)
        rec.samples *= scale / 50.0
        edf = record_to_edf(rec)
        back = parse_edf(edf.to_bytes())
        assert back.channels == rec.channels
        for spec, orig, got in zip(edf.signals, rec.samples, back.samples):
            assert np.max(np.abs(orig - got)) <= spec.gain / 2 * (1 + 1e-9)

    def test_headers_bit_exact(self):
        rec = _record(3, 2)
        edf = record_to_edf(rec, patient_id="chb99", recording_id="run 1",
                            start=datetime(2011, 3, 4, 5, 6, 7))
        back = read_edf(edf.to_bytes())
        assert back.header == edf.header
        assert back.signals == edf.signals

    def test_header_only_parse(self):
        data = write_edf(_record(3, 2, labels=["A", "-", "A"]))
        header, signals = read_header(data[:256 + 3 * 256])
        assert header.num_signals == 3 and [s.label for s in signals] == ["A", "-", "A"]
        keep, warnings = usable_labels(signals)
        assert keep == [0] and len(warnings) == 2

    def test_unknown_record_count_resolved(self):
        data = write_edf(_record(2, 3))
        data = _patch(data, 236, "-1      ")
        assert read_edf(data).header.num_records == 3


class TestChannelCleanup:
    def test_dummy_and_duplicate_dropped(self):
        rec = _record(4, 1, labels=["A", "-", "B", "A"])
        out = parse_edf(write_edf(rec))
        assert out.channels == ["A", "B"]
        assert len(out.warnings) == 2
        np.testing.assert_allclose(out.samples[1], rec.samples[2], atol=1.0)


class TestMalformed:
    def test_truncated_header(self):
        with pytest.raises(EdfError, match="truncated"):
            read_edf(b"0" * 100)

    def test_truncated_signal_header(self):
        data = write_edf(_record(2, 1))
        with pytest.raises(EdfError, match="truncated"):
            read_edf(data[:400])

    def test_non_numeric_field(self):
        data = _patch(write_edf(_record(2, 1)), 236, "abc     ")
        with pytest.raises(EdfError, match="non-numeric"):
            read_edf(data)

    def test_record_count_mismatch(self):
        data = write_edf(_record(2, 2))
        with pytest.raises(EdfError, match="inconsistent"):
            read_edf(data[:-2])

    def test_zero_signals(self):
        data = _patch(write_edf(_record(2, 1)), 252, "0   ")
        with pytest.raises(EdfError, match="zero signals"):
            read_edf(data)

    def test_non_ascii(self):
        data = bytearray(write_edf(_record(2, 1)))
        data[10] = 0xE9
        with pytest.raises(EdfError, match="non-ASCII"):
            read_edf(bytes(data))

    @pytest.mark.parametrize("kwargs", [
        dict(digital_min=5, digital_max=5),
        dict(physical_min=1.0, physical_max=1.0),
        dict(samples_per_record=0),
    ])
    def test_signal_spec_invariants(self, kwargs):
        base = dict(label="x", physical_min=-1.0, physical_max=1.0, digital_min=-10,
                    digital_max=10, samples_per_record=4)
        base.update(kwargs)
        with pytest.raises(EdfError):
            SignalSpec(**base)


class TestRecordInvariants:
    def test_single_channel_rejected(self):
        with pytest.raises(EdfError):
            EegRecord(["a"], np.zeros((1, 10)), 256.0)

    def test_annotation_past_end_rejected(self):
        with pytest.raises(EdfError):
            EegRecord(["a", "b"], np.zeros((2, 256)), 256.0, [SeizureAnnotation(0, 2)])

    @pytest.mark.parametrize("start,end", [(5, 5), (6, 5), (-1, 3)])
    def test_bad_interval(self, start, end):
        with pytest.raises(EdfError):
            SeizureAnnotation(start, end)


SUMMARY = """\
Data Sampling Rate: 256 Hz
*************************

Channels in EDF Files:
**********************
Channel 1: FP1-F7
Channel 2: F7-T7

File Name: chb01_03.edf
File Start Time: 13:43:04
File End Time: 14:43:04
Number of Seizures in File: 1
Seizure Start Time: 2996 seconds
Seizure End Time: 3036 seconds

File Name: chb01_04.edf
File Start Time: 14:43:12
File End Time: 15:43:12
Number of Seizures in File: 0

File Name: chb06_01.edf
Number of Seizures in File: 2
Seizure 1 Start Time: 1724 seconds
Seizure 1 End Time: 1738 seconds
Seizure 2 Start Time: 7461 seconds
Seizure 2 End Time: 7476 seconds
"""


class TestSummary:
    def test_grammar(self):
        out = parse_summary(SUMMARY)
        assert [name for name, _ in out] == ["chb01_03.edf", "chb01_04.edf", "chb06_01.edf"]
        assert out[0][1] == [SeizureAnnotation(2996, 3036)]
        assert out[1][1] == []
        assert out[2][1] == [SeizureAnnotation(1724, 1738), SeizureAnnotation(7461, 7476)]

    def test_two_stanzas(self):
        text = SUMMARY[:SUMMARY.index("File Name: chb06_01.edf")]
        assert len(parse_summary(text)) == 2

    @pytest.mark.parametrize("text,match", [
        ("File Name: a.edf\nSeizure Start Time: 10 seconds\nSeizure End Time: 5 seconds\n", "before"),
        ("File Name: a.edf\nSeizure Start Time: 10 seconds\n", "dangling"),
        ("File Name: a.edf\nSeizure End Time: 10 seconds\n", "without start"),
        ("Seizure Start Time: 1 seconds\n", "outside"),
    ])
    def test_errors(self, text, match):
        with pytest.raises(EdfError, match=match):
            parse_summary(text)


class TestChannelSelection:
    def test_reorders(self):
        rec = _record(3)
        out = select_channels(rec, ["C2", "C0"])
        np.testing.assert_array_equal(out.samples, rec.samples[[2, 0]])

    def test_missing(self):
        with pytest.raises(EdfError, match="missing"):
            select_channels(_record(3), ["C0", "Z"])

    def test_common_channels_keeps_first_order(self):
        a = _record(3, labels=["X", "Y", "Z"])
        b = _record(3, labels=["Z", "Q", "X"])
        assert common_channels([a, b]) == ["X", "Z"]
