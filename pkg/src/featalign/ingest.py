"""Dataset persistence (JSON manifest + float32 blob) and difference-hash deduplication."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Dataset

VERSION = "v1"
MANIFEST = "manifest.json"
BLOB = "images.f32"


class ManifestError(ValueError):
    """Raised for unreadable, inconsistent or corrupted dataset files."""


def vocab_hash(features: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(features).encode()).hexdigest()


def _is_f32_exact(a: np.ndarray) -> bool:
    return bool(np.array_equal(a.astype(np.float32).astype(np.float64), a))


def save_dataset(data: Dataset, path, vocabulary: Sequence[str] | None = None, allow_rounding: bool = False) -> Path:
    """Write ``path/manifest.json`` and ``path/images.f32``.

    Pixels are stored as little-endian float32. Datasets whose pixels are not
    float32-exact (attack outputs, for example) need ``allow_rounding=True``
    and come back rounded. ``vocabulary`` (the matrix's feature list) is
    hashed into the manifest so a later load can check it matches.
    """
    if not allow_rounding and not _is_f32_exact(data.images):
        raise ValueError("images are not float32-exact; pass allow_rounding=True to store them rounded")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    blob = np.ascontiguousarray(data.images, dtype="<f4").tobytes()
    per = int(np.prod(data.image_shape)) * 4 if len(data) else 0
    records = [
        {
            "id": sid,
            "label": data.classes[int(lbl)],
            "truth": sorted(data.truth_set(i), key=data.features.index),
            "offset": i * per,
            "length": per,
            "shape": list(data.image_shape),
        }
        for i, (sid, lbl) in enumerate(zip(data.ids, data.labels))
    ]
    manifest = {
        "version": VERSION,
        "classes": list(data.classes),
        "features": list(data.features),
        "vocab_hash": vocab_hash(vocabulary if vocabulary is not None else data.features),
        "blob": BLOB,
        "blob_bytes": len(blob),
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "image_shape": list(data.image_shape),
        "records": records,
    }
    (out / BLOB).write_bytes(blob)
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n")
    return out


def read_manifest(path) -> dict:
    mpath = Path(path) / MANIFEST
    try:
        manifest = json.loads(mpath.read_text())
    except FileNotFoundError:
        raise ManifestError(f"{mpath}: missing manifest") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{mpath}:{exc.lineno}: malformed manifest ({exc.msg})") from None
    if manifest.get("version") != VERSION:
        raise ManifestError(f"{mpath}: unsupported manifest version {manifest.get('version')!r}, expected {VERSION!r}")
    return manifest


def load_dataset(path, vocabulary: Sequence[str] | None = None) -> Dataset:
    """Inverse of ``save_dataset``; verifies version, checksum, bounds and (optionally) the vocabulary."""
    root = Path(path)
    m = read_manifest(root)
    bpath = root / m["blob"]
    if not bpath.exists():
        raise ManifestError(f"{bpath}: blob referenced by the manifest is missing")
    blob = bpath.read_bytes()
    if len(blob) < m["blob_bytes"]:
        raise ManifestError(f"{bpath}: truncated blob ({len(blob)} of {m['blob_bytes']} bytes)")
    if len(blob) != m["blob_bytes"] or hashlib.sha256(blob).hexdigest() != m["blob_sha256"]:
        raise ManifestError(f"{bpath}: checksum mismatch")
    if vocabulary is not None and vocab_hash(vocabulary) != m["vocab_hash"]:
        raise ManifestError(f"{root}: dataset was written against a different feature vocabulary")

    classes, feats = tuple(m["classes"]), tuple(m["features"])
    shape = tuple(m["image_shape"])
    recs = m["records"]
    images = np.zeros((len(recs), *shape))
    labels = np.zeros(len(recs), dtype=np.int64)
    truth = np.zeros((len(recs), len(feats)), dtype=bool)
    spans = []
    for i, r in enumerate(recs):
        if tuple(r["shape"]) != shape or r["length"] != int(np.prod(shape)) * 4:
            raise ManifestError(f"record {r['id']!r}: shape does not match the manifest")
        if r["offset"] < 0 or r["offset"] + r["length"] > len(blob):
            raise ManifestError(f"record {r['id']!r}: byte range outside the blob")
        spans.append((r["offset"], r["offset"] + r["length"]))
        images[i] = np.frombuffer(blob, dtype="<f4", count=r["length"] // 4, offset=r["offset"]).reshape(shape)
        try:
            labels[i] = classes.index(r["label"])
            for f in r["truth"]:
                truth[i, feats.index(f)] = True
        except ValueError:
            raise ManifestError(f"record {r['id']!r}: unknown label or feature") from None
    spans.sort()
    for (_, end), (start, _) in zip(spans, spans[1:]):
        if start < end:
            raise ManifestError("record byte ranges overlap")
    try:
        return Dataset(images, labels, truth, tuple(r["id"] for r in recs), classes, feats)
    except ValueError as exc:
        raise ManifestError(str(exc)) from None


@dataclass(frozen=True)
class PerceptualHash:
    bits: int  # 64-bit difference hash

    def hamming(self, other: "PerceptualHash") -> int:
        return hamming(self, other)

    def __str__(self) -> str:
        return f"{self.bits:016x}"


def _pool_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Area-averaging weights mapping n_in samples onto n_out equal bins."""
    edges = np.linspace(0.0, n_in, n_out + 1)
    P = np.zeros((n_out, n_in))
    for k in range(n_out):
        lo, hi = edges[k], edges[k + 1]
        for j in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            P[k, j] = min(hi, j + 1) - max(lo, j)
        P[k] /= P[k].sum()
    return P


def dhash(image, tol: float = 1e-9) -> PerceptualHash:
    """Mean-pool the grayscale image to 8 rows by 9 columns and threshold the 64 horizontal gradients."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img.mean(axis=2)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("dhash needs a non-empty 2-D or 3-D image")
    small = _pool_matrix(8, img.shape[0]) @ img @ _pool_matrix(9, img.shape[1]).T
    diff = (small[:, 1:] - small[:, :-1]) > tol
    bits = 0
    for b in diff.ravel():
        bits = (bits << 1) | int(b)
    return PerceptualHash(bits)


def hamming(a: PerceptualHash, b: PerceptualHash) -> int:
    return int(a.bits ^ b.bits).bit_count()


def dedup(a: Dataset, b: Dataset, max_hamming: int) -> Dataset:
    """Samples of ``a`` whose hash is farther than ``max_hamming`` bits from every hash in ``b``."""
    if max_hamming < 0:
        raise ValueError("max_hamming must be >= 0")
    if len(b) == 0 or len(a) == 0:
        return a.subset(np.arange(len(a)))
    hb = np.array([dhash(x).bits for x in b.images], dtype=np.uint64)
    keep = []
    for i, x in enumerate(a.images):
        h = np.uint64(dhash(x).bits)
        if int(np.bitwise_count(hb ^ h).min()) > max_hamming:
            keep.append(i)
    return a.subset(np.array(keep, dtype=np.int64))
