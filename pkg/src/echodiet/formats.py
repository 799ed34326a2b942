"""On-disk formats.

All binary formats are little-endian with a magic tag and a version.

MSPC (raw audio), 32-byte header then interleaved float32 samples::

    4s magic "MSPC" | u16 version | u16 n_channels | u32 sample_rate
    u64 n_samples per channel | 12 reserved bytes

MSEP (echo profile)::

    4s magic "MSEP" | u16 version | u8 kind (0 echo, 1 differential) | u8 pad
    u32 header_len | u32 channels | u32 range_bins | u32 frames
    f64 bin_resolution_m | f64 frame_rate | u16 n_layout | (u8 mic, u8 band) * n
    zero padding to header_len, then float32 payload in (channel, bin, frame) order

MSDS (windowed dataset)::

    4s magic "MSDS" | u16 version | u16 pad | u32 header_len | u64 n_samples
    u32 ndim | u32 dims[ndim] | u16 n_labels | labels | u16 n_groups | groups
    index: (u64 offset, u8 label, u16 group, f64 start_time_s) * n_samples
    zero padding to header_len, then one float32 tensor block per sample

Strings are u16 length-prefixed UTF-8. Tensor offsets are absolute and
64-byte aligned so a file can be memory mapped.
"""
from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

from . import labels as L
from .dataset import FrameTimeline, WindowedSample
from .errors import FormatError
from .signal_core import AudioStream, DifferentialEchoProfile, EchoProfile

VERSION = 1
ALIGN = 64

_MSPC = struct.Struct("<4sHHIQ12x")
_MSEP_FIXED = struct.Struct("<4sHBxIIIIddH")
_MSDS_FIXED = struct.Struct("<4sHxxIQI")
_INDEX = struct.Struct("<QBHd")


def _align(n):
    return (n + ALIGN - 1) // ALIGN * ALIGN


def _read_exact(f, n, what):
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"truncated {what}")
    return data


def _pack_str(s):
    b = s.encode("utf-8")
    return struct.pack("<H", len(b)) + b


def _unpack_str(buf, pos):
    (n,) = struct.unpack_from("<H", buf, pos)
    pos += 2
    if pos + n > len(buf):
        raise FormatError("truncated string")
    return buf[pos:pos + n].decode("utf-8"), pos + n


# -- audio ------------------------------------------------------------------

def write_audio(path, stream: AudioStream):
    data = np.ascontiguousarray(np.asarray(stream.samples, dtype="<f4").T)
    with open(path, "wb") as f:
        f.write(_MSPC.pack(b"MSPC", VERSION, stream.n_channels, int(stream.sample_rate),
                           stream.n_samples))
        f.write(data.tobytes())


def read_audio(path) -> AudioStream:
    with open(path, "rb") as f:
        head = f.read(_MSPC.size)
        if len(head) != _MSPC.size:
            raise FormatError(f"{path}: file too short for an MSPC header")
        magic, version, n_ch, fs, n = _MSPC.unpack(head)
        if magic != b"MSPC":
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported MSPC version {version}")
        if n_ch < 1 or fs < 1:
            raise FormatError(f"{path}: invalid channel count or sample rate")
        payload = f.read()
    if len(payload) != 4 * n_ch * n:
        raise FormatError(f"{path}: payload holds {len(payload)} bytes, header promises {4 * n_ch * n}")
    data = np.frombuffer(payload, dtype="<f4").reshape(n, n_ch).T
    return AudioStream(np.ascontiguousarray(data), float(fs))


# -- echo profiles ------------------------------------------------------------

def write_profile(path, profile: EchoProfile):
    kind = 1 if isinstance(profile, DifferentialEchoProfile) else 0
    c, r, t = profile.data.shape
    layout = b"".join(struct.pack("<BB", m, b) for m, b in profile.channel_layout)
    head_len = _align(_MSEP_FIXED.size + len(layout))
    head = _MSEP_FIXED.pack(b"MSEP", VERSION, kind, head_len, c, r, t,
                            float(profile.bin_resolution_m), float(profile.frame_rate),
                            len(profile.channel_layout)) + layout
    with open(path, "wb") as f:
        f.write(head.ljust(head_len, b"\0"))
        f.write(np.ascontiguousarray(profile.data, dtype="<f4").tobytes())


def read_profile(path, mmap: bool = False) -> EchoProfile:
    with open(path, "rb") as f:
        fixed = f.read(_MSEP_FIXED.size)
        if len(fixed) != _MSEP_FIXED.size:
            raise FormatError(f"{path}: file too short for an MSEP header")
        magic, version, kind, head_len, c, r, t, res, rate, n_layout = _MSEP_FIXED.unpack(fixed)
        if magic != b"MSEP":
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION or kind not in (0, 1):
            raise FormatError(f"{path}: unsupported MSEP version/kind")
        layout_raw = _read_exact(f, 2 * n_layout, "channel layout")
        layout = tuple(struct.unpack_from("<BB", layout_raw, 2 * i) for i in range(n_layout))
    size = Path(path).stat().st_size
    if size != head_len + 4 * c * r * t:
        raise FormatError(f"{path}: payload size does not match dims {(c, r, t)}")
    if mmap:
        data = np.memmap(path, dtype="<f4", mode="r", offset=head_len, shape=(c, r, t))
    else:
        with open(path, "rb") as f:
            f.seek(head_len)
            data = np.frombuffer(f.read(), dtype="<f4").reshape(c, r, t)
    cls = DifferentialEchoProfile if kind == 1 else EchoProfile
    frame_rate = int(rate) if float(rate).is_integer() else rate
    return cls(data, res, frame_rate, layout)


# -- datasets ------------------------------------------------------------------

def write_dataset(path, samples):
    samples = list(samples)
    dims = tuple(samples[0].tensor.shape) if samples else ()
    if any(tuple(s.tensor.shape) != dims for s in samples):
        raise FormatError("all samples must share one tensor shape")
    groups = sorted({s.group for s in samples})
    gidx = {g: i for i, g in enumerate(groups)}
    meta = struct.pack(f"<{len(dims)}I", *dims)
    meta += struct.pack("<H", L.N_CLASSES) + b"".join(_pack_str(c) for c in L.CLASSES)
    meta += struct.pack("<H", len(groups)) + b"".join(_pack_str(g) for g in groups)
    head_len = _align(_MSDS_FIXED.size + len(meta) + _INDEX.size * len(samples))
    block = _align(4 * int(np.prod(dims))) if samples else 0
    index = b"".join(_INDEX.pack(head_len + i * block, s.label_index, gidx[s.group],
                                 float(s.start_time_s)) for i, s in enumerate(samples))
    head = _MSDS_FIXED.pack(b"MSDS", VERSION, head_len, len(samples), len(dims)) + meta + index
    with open(path, "wb") as f:
        f.write(head.ljust(head_len, b"\0"))
        for s in samples:
            f.write(np.ascontiguousarray(s.tensor, dtype="<f4").tobytes().ljust(block, b"\0"))


def read_dataset(path, mmap: bool = False) -> list[WindowedSample]:
    raw = Path(path).read_bytes() if not mmap else None
    with open(path, "rb") as f:
        fixed = f.read(_MSDS_FIXED.size)
        if len(fixed) != _MSDS_FIXED.size:
            raise FormatError(f"{path}: file too short for an MSDS header")
        magic, version, head_len, n, ndim = _MSDS_FIXED.unpack(fixed)
        if magic != b"MSDS":
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported MSDS version {version}")
        f.seek(0)
        head = f.read(head_len)
    if len(head) != head_len:
        raise FormatError(f"{path}: truncated header")
    try:
        pos = _MSDS_FIXED.size
        dims = struct.unpack_from(f"<{ndim}I", head, pos)
        pos += 4 * ndim
        (n_labels,) = struct.unpack_from("<H", head, pos)
        pos += 2
        label_table = []
        for _ in range(n_labels):
            s, pos = _unpack_str(head, pos)
            label_table.append(s)
        (n_groups,) = struct.unpack_from("<H", head, pos)
        pos += 2
        groups = []
        for _ in range(n_groups):
            s, pos = _unpack_str(head, pos)
            groups.append(s)
        index = [_INDEX.unpack_from(head, pos + i * _INDEX.size) for i in range(n)]
    except struct.error as e:
        raise FormatError(f"{path}: corrupt header ({e})") from None
    count = int(np.prod(dims)) if n else 0
    mm = np.memmap(path, dtype="u1", mode="r") if mmap else None
    out = []
    for offset, lab, g, start in index:
        if offset + 4 * count > (len(raw) if raw is not None else mm.size):
            raise FormatError(f"{path}: sample block past end of file")
        if raw is not None:
            arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(dims)
        else:
            arr = np.ndarray(dims, dtype="<f4", buffer=mm, offset=offset)
        out.append(WindowedSample(arr, label_table[lab], start, groups[g]))
    return out


# -- text formats ---------------------------------------------------------------

def write_timeline(path, timeline: FrameTimeline):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["second", "label"])
    for i, lab in enumerate(timeline):
        w.writerow([i, lab])
    Path(path).write_text(buf.getvalue())


def read_timeline(path) -> FrameTimeline:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or [c.strip() for c in rows[0]] != ["second", "label"]:
        raise FormatError(f"{path}: expected a 'second,label' header")
    labels = []
    for i, row in enumerate(rows[1:]):
        if len(row) != 2 or row[0].strip() != str(i):
            raise FormatError(f"{path}: row {i + 2} out of sequence")
        try:
            labels.append(L.to_name(row[1].strip()))
        except ValueError as e:
            raise FormatError(f"{path}: {e}") from None
    return FrameTimeline(labels)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from None
