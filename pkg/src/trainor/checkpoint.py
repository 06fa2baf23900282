"""Binary checkpoint container.

Layout (all integers little-endian u32)::

    b"TRNR" | version | config_len | config (UTF-8 key=value text)
    | n_records | records... | crc32 of everything before it

Each record is ``name_len | name | rank | dims... | float64 LE values``.
Vocabularies and run metadata ride in the config block under ``vocab.*`` and
``meta.*`` keys; the geographic adjacency is stored as record ``buffer.a_geo``.
"""
import struct
import zlib
from pathlib import Path

import numpy as np

from .config import TrainConfig, from_kv, parse_kv, to_kv
from .errors import IntegrityError, VersionError
from .pipeline import CHECKPOINT_VERSION, Checkpoint

MAGIC = b"TRNR"
_U32 = struct.Struct("<I")


def _config_block(ckpt):
    text = to_kv(ckpt.config)
    text += f"meta.epoch={ckpt.epoch}\n"
    for k in sorted(ckpt.losses):
        text += f"meta.loss.{k}={float(ckpt.losses[k])!r}\n"
    # tokens never contain tabs: they come from tab-separated files
    text += "vocab.home=" + "\t".join(ckpt.home_tokens) + "\n"
    text += "vocab.out=" + "\t".join(ckpt.out_tokens) + "\n"
    return text.encode("utf-8")


def _record(name, arr):
    arr = np.asarray(arr, dtype="<f8")
    raw = name.encode("utf-8")
    out = [_U32.pack(len(raw)), raw, _U32.pack(arr.ndim)]
    out += [_U32.pack(n) for n in arr.shape]
    out.append(arr.tobytes(order="C"))
    return b"".join(out)


def dumps(ckpt):
    body = [MAGIC, _U32.pack(ckpt.version)]
    cfg = _config_block(ckpt)
    body += [_U32.pack(len(cfg)), cfg]
    records = [("buffer.a_geo", ckpt.a_geo)] + sorted(ckpt.params.items())
    body.append(_U32.pack(len(records)))
    body += [_record(n, a) for n, a in records]
    data = b"".join(body)
    return data + _U32.pack(zlib.crc32(data) & 0xFFFFFFFF)


def save_checkpoint(ckpt, path):
    data = dumps(ckpt)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, section):
        if self.pos + n > len(self.data):
            raise IntegrityError(section, f"truncated: need {n} bytes at offset {self.pos}, file has {len(self.data)}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, section):
        return _U32.unpack(self.take(4, section))[0]


def loads(data):
    r = _Reader(data)
    if r.take(4, "header") != MAGIC:
        raise IntegrityError("header", "bad magic bytes")
    version = r.u32("header")
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"unsupported checkpoint version {version} (supported: {CHECKPOINT_VERSION})")
    n_cfg = r.u32("config")
    try:
        kv = parse_kv(r.take(n_cfg, "config").decode("utf-8"), comments=False)
    except (UnicodeDecodeError, ValueError) as exc:
        raise IntegrityError("config", str(exc)) from None
    n_rec = r.u32("records")
    arrays = {}
    for i in range(n_rec):
        section = f"record {i}"
        name = r.take(r.u32(section), section).decode("utf-8", errors="replace")
        section = f"record {i} ({name})"
        rank = r.u32(section)
        shape = tuple(r.u32(section) for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(r.take(8 * count, section), dtype="<f8").astype(np.float64).reshape(shape)
    crc = r.u32("checksum")
    if r.pos != len(data):
        raise IntegrityError("checksum", f"{len(data) - r.pos} trailing bytes after checksum")
    if crc != zlib.crc32(data[:-4]) & 0xFFFFFFFF:
        raise IntegrityError("checksum", "CRC32 mismatch")

    meta = {k: v for k, v in kv.items() if k.startswith(("meta.", "vocab."))}
    cfg = from_kv(TrainConfig, {k: v for k, v in kv.items() if k not in meta})
    # vocab values are tab-joined; parse_kv strips, so an empty vocab stays empty
    home = meta.get("vocab.home", "")
    out = meta.get("vocab.out", "")
    losses = {k[len("meta.loss."):]: float(v) for k, v in meta.items() if k.startswith("meta.loss.")}
    if "buffer.a_geo" not in arrays:
        raise IntegrityError("records", "missing buffer.a_geo")
    a_geo = arrays.pop("buffer.a_geo")
    return Checkpoint(config=cfg, params=arrays, a_geo=a_geo,
                      home_tokens=home.split("\t") if home else [],
                      out_tokens=out.split("\t") if out else [],
                      epoch=int(meta.get("meta.epoch", 0)), losses=losses, version=version)


def load_checkpoint(path):
    return loads(Path(path).read_bytes())
