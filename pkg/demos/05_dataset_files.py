"""
Dataset files and near-duplicate checks
=======================================

Write a generated split to disk, read it back with verification, and use
difference hashes to look for test images that leak from the train split.
"""

import tempfile
from pathlib import Path

import numpy as np

from featalign import datagen, ingest
from featalign.features import load_expanded

matrix = load_expanded()
cs = matrix.class_set("CS5a")
train, _, test = datagen.generate_dataset(matrix, cs, per_class=40, drop_p=0.2, seed=3)

with tempfile.TemporaryDirectory() as tmp:
    path = ingest.save_dataset(test, Path(tmp) / "test", vocabulary=matrix.vocab.atomic)
    back = ingest.load_dataset(path, vocabulary=matrix.vocab.atomic)
    print("round trip identical:", back.equals(test))

    # flip one byte and the checksum catches it
    blob = path / ingest.BLOB
    raw = bytearray(blob.read_bytes())
    raw[0] ^= 1
    blob.write_bytes(bytes(raw))
    try:
        ingest.load_dataset(path)
    except ingest.ManifestError as exc:
        print("corruption detected:", exc)

h = [ingest.dhash(x) for x in test.images[:4]]
print("hashes:", [str(x) for x in h])
print("pairwise distances:", [h[0].hamming(o) for o in h[1:]])

# plant a brightened copy of a training image in the test split
leaked = test.with_images(np.concatenate([train.images[:1] * 0.9 + 0.05, test.images[1:]]))
clean = ingest.dedup(leaked, train, max_hamming=4)
print(f"kept {len(clean)} of {len(leaked)} test images; dropped {sorted(set(leaked.ids) - set(clean.ids))}")
