"""EDF reading/writing and CHB-MIT seizure summary parsing."""

from dataclasses import dataclass, field, replace
from datetime import datetime
import re

import numpy as np

__all__ = [
    "EdfError",
    "EdfHeader",
    "SignalSpec",
    "EdfFile",
    "SeizureAnnotation",
    "EegRecord",
    "read_edf",
    "read_header",
    "usable_labels",
    "parse_edf",
    "write_edf",
    "record_to_edf",
    "parse_summary",
    "select_channels",
    "common_channels",
]


class EdfError(ValueError):
    pass


@dataclass(frozen=True)
class EdfHeader:
    version: int
    patient_id: str
    recording_id: str
    start_datetime: datetime
    header_bytes: int
    num_records: int
    record_duration_s: float
    num_signals: int
    reserved: str = ""


@dataclass(frozen=True)
class SignalSpec:
    label: str
    physical_min: float
    physical_max: float
    digital_min: int
    digital_max: int
    samples_per_record: int
    transducer: str = ""
    physical_dimension: str = "uV"
    prefiltering: str = ""
    reserved: str = ""

    def __post_init__(self):
        if self.digital_min >= self.digital_max:
            raise EdfError(f"{self.label!r}: digital_min must be < digital_max")
        if self.physical_min == self.physical_max:
            raise EdfError(f"{self.label!r}: physical_min equals physical_max")
        if self.samples_per_record <= 0:
            raise EdfError(f"{self.label!r}: samples_per_record must be positive")

    @property
    def gain(self):
        return (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min)

    def to_physical(self, digital):
        return self.physical_min + (np.asarray(digital, dtype=np.float64) - self.digital_min) * self.gain

    def to_digital(self, physical):
        d = np.rint((np.asarray(physical, dtype=np.float64) - self.physical_min) / self.gain + self.digital_min)
        return np.clip(d, self.digital_min, self.digital_max).astype(np.int16)


@dataclass(frozen=True)
class SeizureAnnotation:
    start_s: int
    end_s: int

    def __post_init__(self):
        if not 0 <= self.start_s < self.end_s:
            raise EdfError(f"invalid seizure interval [{self.start_s}, {self.end_s})")

    @property
    def duration_s(self):
        return self.end_s - self.start_s


@dataclass
class EegRecord:
    channels: list
    samples: np.ndarray
    fs: float
    annotations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[0] != len(self.channels):
            raise EdfError("samples must be an N x L matrix matching the channel list")
        if len(self.channels) < 2:
            raise EdfError("a record needs at least two channels")
        if self.fs <= 0:
            raise EdfError("sampling rate must be positive")
        for a in self.annotations:
            if a.end_s > self.duration_s + 1e-9:
                raise EdfError(f"annotation {a} exceeds record length {self.duration_s:g} s")

    @property
    def n_channels(self):
        return self.samples.shape[0]

    @property
    def n_samples(self):
        return self.samples.shape[1]

    @property
    def duration_s(self):
        return self.n_samples / self.fs


@dataclass
class EdfFile:
    """Header, per-signal specs and raw digital samples of one EDF file."""

    header: EdfHeader
    signals: list
    digital: list  # one int16 array per signal

    def to_bytes(self):
        return _serialize(self.header, self.signals, self.digital)

    def to_record(self, annotations=()):
        keep, warnings = usable_labels(self.signals)
        if not keep:
            raise EdfError("no usable signals")
        spr = {self.signals[k].samples_per_record for k in keep}
        if len(spr) != 1:
            raise EdfError("channels have differing sampling rates")
        fs = spr.pop() / self.header.record_duration_s
        samples = np.vstack([self.signals[k].to_physical(self.digital[k]) for k in keep])
        return EegRecord(
            channels=[self.signals[k].label.strip() for k in keep],
            samples=samples,
            fs=fs,
            annotations=list(annotations),
            warnings=warnings,
        )


def _field(raw, start, width, name, kind=str):
    try:
        text = raw[start:start + width].decode("ascii").strip()
    except UnicodeDecodeError:
        raise EdfError(f"non-ASCII bytes in {name} field") from None
    if kind is str:
        return text
    try:
        return kind(text)
    except ValueError:
        raise EdfError(f"non-numeric {name} field {text!r}") from None


def _parse_datetime(date, time):
    try:
        dd, mm, yy = (int(p) for p in date.split("."))
        hh, mi, ss = (int(p) for p in time.split("."))
    except ValueError:
        raise EdfError(f"malformed start date/time {date!r} {time!r}") from None
    # EDF two-digit year clipping convention
    year = 1900 + yy if yy >= 85 else 2000 + yy
    return datetime(year, mm, dd, hh, mi, ss)


def read_header(data):
    """Parse the fixed and per-signal headers only.

    Returns ``(header, signals)``; ``header.num_records`` is the declared value
    (possibly -1) since the data section is not inspected.
    """
    data = bytes(data)
    if len(data) < 256:
        raise EdfError("truncated header")
    header_bytes = _field(data, 184, 8, "header_bytes", int)
    num_records = _field(data, 236, 8, "num_records", int)
    duration = _field(data, 244, 8, "record_duration", float)
    ns = _field(data, 252, 4, "num_signals", int)
    if ns <= 0:
        raise EdfError("file declares zero signals")
    if header_bytes != 256 + 256 * ns:
        raise EdfError(f"header_bytes {header_bytes} inconsistent with {ns} signals")
    if len(data) < header_bytes:
        raise EdfError("truncated signal header")
    if duration <= 0:
        raise EdfError("record duration must be positive")

    def column(offset, width, name, kind=str):
        base = 256 + offset * ns
        return [_field(data, base + k * width, width, name, kind) for k in range(ns)]

    offsets = {}
    pos = 0
    for key, width in (("label", 16), ("transducer", 80), ("dimension", 8), ("pmin", 8), ("pmax", 8),
                       ("dmin", 8), ("dmax", 8), ("prefilter", 80), ("spr", 8), ("reserved", 32)):
        offsets[key] = (pos, width)
        pos += width
    labels = column(*offsets["label"], "label")
    transducers = column(*offsets["transducer"], "transducer")
    dims = column(*offsets["dimension"], "dimension")
    pmin = column(*offsets["pmin"], "physical_min", float)
    pmax = column(*offsets["pmax"], "physical_max", float)
    dmin = column(*offsets["dmin"], "digital_min", int)
    dmax = column(*offsets["dmax"], "digital_max", int)
    prefilter = column(*offsets["prefilter"], "prefiltering")
    spr = column(*offsets["spr"], "samples_per_record", int)
    sreserved = column(*offsets["reserved"], "reserved")
    signals = [
        SignalSpec(labels[k], pmin[k], pmax[k], dmin[k], dmax[k], spr[k],
                   transducers[k], dims[k], prefilter[k], sreserved[k])
        for k in range(ns)
    ]
    header = EdfHeader(
        version=_field(data, 0, 8, "version", int),
        patient_id=_field(data, 8, 80, "patient"),
        recording_id=_field(data, 88, 80, "recording"),
        start_datetime=_parse_datetime(_field(data, 168, 8, "date"), _field(data, 176, 8, "time")),
        header_bytes=header_bytes,
        num_records=num_records,
        record_duration_s=duration,
        num_signals=ns,
        reserved=_field(data, 192, 44, "reserved"),
    )
    return header, signals


def usable_labels(signals):
    """Indices kept by :meth:`EdfFile.to_record`, plus one warning per dropped signal."""
    keep, warnings, seen = [], [], set()
    for k, s in enumerate(signals):
        label = s.label.strip()
        if label in ("", "-"):
            warnings.append(f"dropped dummy channel {k} ({s.label!r})")
        elif label in seen:
            warnings.append(f"dropped duplicate channel {k} ({label!r})")
        else:
            seen.add(label)
            keep.append(k)
    return keep, warnings


def read_edf(data):
    """Parse EDF bytes into an :class:`EdfFile` without calibration."""
    data = bytes(data)
    header, signals = read_header(data)
    spr = [s.samples_per_record for s in signals]
    ns = len(signals)
    record_size = 2 * sum(spr)
    payload = len(data) - header.header_bytes
    num_records = header.num_records
    if num_records == -1:
        if payload % record_size:
            raise EdfError("data length is not a whole number of records")
        num_records = payload // record_size
    elif num_records < 0:
        raise EdfError(f"invalid record count {num_records}")
    elif num_records * record_size != payload:
        raise EdfError(
            f"record count {num_records} inconsistent with file length "
            f"({payload} data bytes, {record_size} per record)"
        )
    header = replace(header, num_records=num_records)
    raw = np.frombuffer(data, dtype="<i2", offset=header.header_bytes).reshape(num_records, sum(spr))
    bounds = np.cumsum([0] + spr)
    digital = [raw[:, bounds[k]:bounds[k + 1]].reshape(-1).astype(np.int16) for k in range(ns)]
    return EdfFile(header, signals, digital)


def parse_edf(data, annotations=()):
    return read_edf(data).to_record(annotations)


def _number_text(value, width):
    if value == int(value) and abs(value) < 10 ** (width - 1):
        return str(int(value))
    text = repr(float(value))
    prec = width
    while len(text) > width and prec > 1:
        prec -= 1
        text = f"{value:.{prec}g}"
    return text


def _ascii(value, width):
    text = _number_text(value, width) if isinstance(value, float) else str(value)
    if len(text) > width:
        raise EdfError(f"value {text!r} does not fit in {width} bytes")
    return text.ljust(width).encode("ascii")


def _serialize(header, signals, digital):
    ns = len(signals)
    start = header.start_datetime
    parts = [
        _ascii(header.version, 8),
        _ascii(header.patient_id, 80),
        _ascii(header.recording_id, 80),
        _ascii(start.strftime("%d.%m.%y"), 8),
        _ascii(start.strftime("%H.%M.%S"), 8),
        _ascii(256 + 256 * ns, 8),
        _ascii(header.reserved, 44),
        _ascii(header.num_records, 8),
        _ascii(float(header.record_duration_s), 8),
        _ascii(ns, 4),
    ]
    for attr, width in (("label", 16), ("transducer", 80), ("physical_dimension", 8),
                        ("physical_min", 8), ("physical_max", 8), ("digital_min", 8),
                        ("digital_max", 8), ("prefiltering", 80), ("samples_per_record", 8),
                        ("reserved", 32)):
        parts.extend(_ascii(getattr(s, attr), width) for s in signals)
    blocks = [np.asarray(d, dtype="<i2").reshape(header.num_records, s.samples_per_record)
              for s, d in zip(signals, digital)]
    parts.append(np.hstack(blocks).tobytes() if blocks else b"")
    return b"".join(parts)


def record_to_edf(record, patient_id="X", recording_id="synthetic", start=None,
                  record_duration_s=1.0, headroom=1.05):
    """Quantize a physical-unit record into an :class:`EdfFile` (16-bit)."""
    spr = record.fs * record_duration_s
    if abs(spr - round(spr)) > 1e-9:
        raise EdfError("fs * record duration must be an integer sample count")
    spr = int(round(spr))
    num_records, rem = divmod(record.n_samples, spr)
    if rem:
        raise EdfError("record length is not a whole number of data records")
    signals, digital = [], []
    for label, x in zip(record.channels, record.samples):
        peak = float(np.abs(x).max(initial=0.0)) * headroom
        # the stored bound must be exactly what a reader will parse back
        peak = float(_number_text(max(peak, 1e-3), 7))
        spec = SignalSpec(label, -peak, peak, -32768, 32767, spr)
        signals.append(spec)
        digital.append(spec.to_digital(x))
    header = EdfHeader(
        version=0,
        patient_id=patient_id,
        recording_id=recording_id,
        start_datetime=start or datetime(2000, 1, 1),
        header_bytes=256 + 256 * len(signals),
        num_records=num_records,
        record_duration_s=record_duration_s,
        num_signals=len(signals),
    )
    return EdfFile(header, signals, digital)


def write_edf(record, **kwargs):
    return record_to_edf(record, **kwargs).to_bytes()


_FILE_RE = re.compile(r"^\s*File Name:\s*(\S+)")
_COUNT_RE = re.compile(r"^\s*Number of Seizures in File:\s*(\d+)")
_START_RE = re.compile(r"^\s*Seizure(?:\s+\d+)?\s+Start Time:\s*(\d+)\s*seconds?")
_END_RE = re.compile(r"^\s*Seizure(?:\s+\d+)?\s+End Time:\s*(\d+)\s*seconds?")


def parse_summary(text):
    """Parse a CHB-MIT ``*-summary.txt`` into ``[(file_name, [SeizureAnnotation, ...]), ...]``."""
    out = []
    current = None
    pending = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if m := _FILE_RE.match(line):
            if pending is not None:
                raise EdfError(f"line {lineno}: seizure start without end in {current[0]}")
            current = (m.group(1), [])
            out.append(current)
        elif m := _START_RE.match(line):
            if current is None:
                raise EdfError(f"line {lineno}: seizure outside a File Name stanza")
            if pending is not None:
                raise EdfError(f"line {lineno}: seizure start without end")
            pending = int(m.group(1))
        elif m := _END_RE.match(line):
            if pending is None:
                raise EdfError(f"line {lineno}: seizure end without start")
            end = int(m.group(1))
            if end <= pending:
                raise EdfError(f"line {lineno}: seizure ends ({end}) before it starts ({pending})")
            current[1].append(SeizureAnnotation(pending, end))
            pending = None
        elif _COUNT_RE.match(line) and current is None:
            raise EdfError(f"line {lineno}: seizure count outside a File Name stanza")
    if pending is not None:
        raise EdfError("dangling seizure start at end of summary")
    return out


def select_channels(rec, labels):
    """Return ``rec`` restricted to ``labels`` in the requested order."""
    index = {}
    for k, name in enumerate(rec.channels):
        if name in index:
            raise EdfError(f"duplicate channel {name!r} in record")
        index[name] = k
    missing = [lab for lab in labels if lab not in index]
    if missing:
        raise EdfError(f"missing channel(s): {', '.join(missing)}")
    rows = [index[lab] for lab in labels]
    return replace(rec, channels=list(labels), samples=rec.samples[rows])


def common_channels(records):
    """Labels present in every record, in the order of the first one."""
    records = list(records)
    if not records:
        return []
    shared = set(records[0].channels)
    for r in records[1:]:
        shared &= set(r.channels)
    return [c for c in records[0].channels if c in shared]
