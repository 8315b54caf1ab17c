"""Versioned, checksummed JSON containers for assembled operators and feedback laws.

Layout::

    {"format": <kind>, "version": 1, "fingerprint": <hex>, "params": {...},
     "payload": {...}, "checksum": sha256(canonical JSON of everything else)}

Complex numbers are stored as ``[real, imag]`` pairs; Python's float repr makes the
round trip bit-exact.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

VERSION = 1


class CacheIntegrityError(ValueError):
    pass


class FingerprintMismatchError(ValueError):
    def __init__(self, expected: str, found: str):
        self.expected, self.found = expected, found
        super().__init__(f"fingerprint mismatch: expected {expected}, file has {found}")


def encode_complex(a: np.ndarray) -> list:
    a = np.asarray(a, dtype=complex)
    return [a.shape, [[float(z.real), float(z.imag)] for z in a.ravel()]]


def decode_complex(obj) -> np.ndarray:
    shape, vals = obj
    arr = np.array([complex(re, im) for re, im in vals], dtype=complex)
    return arr.reshape(shape)


def _canonical(doc: dict) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def dumps(kind: str, fingerprint: str, params: dict, payload: dict) -> str:
    doc = {"format": kind, "version": VERSION, "fingerprint": fingerprint, "params": params, "payload": payload}
    doc["checksum"] = hashlib.sha256(_canonical(doc)).hexdigest()
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def loads(text: str, kind: str, fingerprint: str | None = None) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CacheIntegrityError(f"unreadable cache file: {exc}") from exc
    checksum = doc.pop("checksum", None)
    if checksum != hashlib.sha256(_canonical(doc)).hexdigest():
        raise CacheIntegrityError("checksum does not match the stored content")
    if doc.get("format") != kind:
        raise CacheIntegrityError(f"expected a {kind!r} container, found {doc.get('format')!r}")
    if doc.get("version") != VERSION:
        raise CacheIntegrityError(f"unsupported container version {doc.get('version')}")
    if fingerprint is not None and doc["fingerprint"] != fingerprint:
        raise FingerprintMismatchError(fingerprint, doc["fingerprint"])
    return doc


def write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
