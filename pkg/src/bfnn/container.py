"""Binary container for channel datasets and channel-estimate sets.

Layout: 8-byte magic "BFNNDS1\\n", a 4-byte big-endian JSON header length,
the UTF-8 JSON header, then fixed-width little-endian records. Channel
records ("CHAN1") hold seed, snr, per-path (gain re, gain im, aod) and the
interleaved re/im channel vector; estimate records ("EST1") hold the source
seed, pnr_db, per-path (gain re, gain im, aod) and the interleaved estimate.
All floats are 8-byte; round trips are lossless to the bit.
"""

from __future__ import annotations

import hashlib
import io
import json

import numpy as np

from .channel import ChannelDataset, ChannelSample, PathParams

MAGIC = b"BFNNDS1\n"
VERSION = 1
RECORD_CHANNELS = "CHAN1"
RECORD_ESTIMATES = "EST1"


class ContainerError(Exception):
    """Base class for container file problems."""


class CorruptHeaderError(ContainerError):
    """Magic bytes or JSON header are damaged."""


class TruncatedPayloadError(ContainerError):
    """File ends before the records the header promises."""


class DimensionMismatchError(ContainerError):
    """Header dimensions disagree with the data or the reader's expectation."""


def _write_preamble(buf, header: dict) -> None:
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    buf.write(MAGIC)
    buf.write(len(raw).to_bytes(4, "big"))
    buf.write(raw)


def _read_exact(buf, n: int, what: str) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise TruncatedPayloadError(f"unexpected end of file reading {what}")
    return data


def _read_preamble(buf) -> dict:
    magic = buf.read(len(MAGIC))
    if magic != MAGIC:
        raise CorruptHeaderError(f"bad magic {magic!r}")
    hlen = int.from_bytes(_read_exact(buf, 4, "header length"), "big")
    try:
        header = json.loads(_read_exact(buf, hlen, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptHeaderError(f"undecodable header: {e}") from e
    if not isinstance(header, dict) or "record_type" not in header:
        raise CorruptHeaderError("header is not a record descriptor")
    return header


def _interleave(v: np.ndarray) -> np.ndarray:
    out = np.empty(2 * v.size)
    out[0::2] = v.real
    out[1::2] = v.imag
    return out


def _deinterleave(flat: np.ndarray) -> np.ndarray:
    return flat[0::2] + 1j * flat[1::2]


def serialize_dataset(ds: ChannelDataset) -> bytes:
    header = {
        "record_type": RECORD_CHANNELS,
        "version": VERSION,
        "n_t": ds.n_t,
        "l_paths": ds.l_paths,
        "count": len(ds.samples),
        **{k: v for k, v in ds.meta.items() if k != "count"},
    }
    buf = io.BytesIO()
    _write_preamble(buf, header)
    for s in ds.samples:
        if len(s.h) != ds.n_t or len(s.paths) != ds.l_paths:
            raise DimensionMismatchError("sample shape disagrees with dataset")
        buf.write(np.uint64(s.seed).tobytes())
        rec = [s.snr]
        for p in s.paths:
            rec += [p.gain.real, p.gain.imag, p.aod]
        buf.write(np.asarray(rec, dtype="<f8").tobytes())
        buf.write(_interleave(s.h).astype("<f8").tobytes())
    return buf.getvalue()


def save_dataset(ds: ChannelDataset, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize_dataset(ds))


def load_dataset(path) -> ChannelDataset:
    with open(path, "rb") as f:
        header = _read_preamble(f)
        if header["record_type"] != RECORD_CHANNELS:
            raise DimensionMismatchError(
                f"expected {RECORD_CHANNELS} records, found {header['record_type']}"
            )
        n_t, lp, count = header["n_t"], header["l_paths"], header["count"]
        samples = []
        for _ in range(count):
            seed = int(np.frombuffer(_read_exact(f, 8, "seed"), "<u8")[0])
            rec = np.frombuffer(
                _read_exact(f, 8 * (1 + 3 * lp), "path record"), "<f8"
            )
            snr = float(rec[0])
            paths = tuple(
                PathParams(
                    gain=complex(rec[1 + 3 * i], rec[2 + 3 * i]),
                    aod=float(rec[3 + 3 * i]),
                    is_los=(i == 0),
                )
                for i in range(lp)
            )
            flat = np.frombuffer(_read_exact(f, 16 * n_t, "channel"), "<f8")
            samples.append(
                ChannelSample(h=_deinterleave(flat), paths=paths, snr=snr, seed=seed)
            )
        extra = f.read(1)
        if extra:
            raise DimensionMismatchError("trailing bytes after final record")
    meta = {
        k: v
        for k, v in header.items()
        if k not in ("record_type", "version", "n_t", "l_paths")
    }
    return ChannelDataset(
        samples=tuple(samples), n_t=n_t, l_paths=lp, meta=meta
    )


def serialize_estimates(estimates, n_t: int, l_est: int, meta: dict) -> bytes:
    header = {
        "record_type": RECORD_ESTIMATES,
        "version": VERSION,
        "n_t": n_t,
        "l_est": l_est,
        "count": len(estimates),
        **meta,
    }
    buf = io.BytesIO()
    _write_preamble(buf, header)
    for e in estimates:
        if len(e.h_est) != n_t or len(e.paths_est) != l_est:
            raise DimensionMismatchError("estimate shape disagrees with header")
        buf.write(np.uint64(e.source_seed).tobytes())
        rec = [e.pnr_db]
        for aod, gain in e.paths_est:
            rec += [gain.real, gain.imag, aod]
        buf.write(np.asarray(rec, dtype="<f8").tobytes())
        buf.write(_interleave(e.h_est).astype("<f8").tobytes())
    return buf.getvalue()


def save_estimates(estimates, n_t: int, l_est: int, meta: dict, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize_estimates(estimates, n_t, l_est, meta))


def load_estimates(path):
    """Returns (list of ChannelEstimate, header meta dict)."""
    from .estimator import ChannelEstimate

    with open(path, "rb") as f:
        header = _read_preamble(f)
        if header["record_type"] != RECORD_ESTIMATES:
            raise DimensionMismatchError(
                f"expected {RECORD_ESTIMATES} records, found {header['record_type']}"
            )
        n_t, le, count = header["n_t"], header["l_est"], header["count"]
        out = []
        for _ in range(count):
            seed = int(np.frombuffer(_read_exact(f, 8, "seed"), "<u8")[0])
            rec = np.frombuffer(
                _read_exact(f, 8 * (1 + 3 * le), "estimate record"), "<f8"
            )
            pnr_db = float(rec[0])
            paths = tuple(
                (float(rec[3 + 3 * i]), complex(rec[1 + 3 * i], rec[2 + 3 * i]))
                for i in range(le)
            )
            flat = np.frombuffer(_read_exact(f, 16 * n_t, "estimate"), "<f8")
            out.append(
                ChannelEstimate(
                    h_est=_deinterleave(flat),
                    paths_est=paths,
                    pnr_db=pnr_db,
                    source_seed=seed,
                )
            )
        if f.read(1):
            raise DimensionMismatchError("trailing bytes after final record")
    meta = {
        k: v
        for k, v in header.items()
        if k not in ("record_type", "version", "n_t", "l_est")
    }
    return out, meta


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def dataset_digest(ds: ChannelDataset) -> str:
    return digest(serialize_dataset(ds))


def file_digest(path) -> str:
    with open(path, "rb") as f:
        return digest(f.read())
