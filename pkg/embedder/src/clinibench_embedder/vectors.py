"""Writer for the shared vector file format.

One JSON header line {"dim": d, "count": n, "normalized": bool}, then n
binary records of (u16 LE id length, id bytes UTF-8, d float32 LE). This
is an independent implementation of the format the benchmark engine
loads; the round-trip test pins the two against each other bit-exactly.
"""

from __future__ import annotations

import json
import struct
from typing import Mapping

import numpy as np


def write_vector_file(path, vectors: Mapping[str, np.ndarray], normalized: bool) -> None:
    ids = sorted(vectors)
    if not ids:
        raise ValueError("no vectors to write")
    dim = int(np.asarray(vectors[ids[0]]).shape[0])
    header = json.dumps({"dim": dim, "count": len(ids), "normalized": bool(normalized)})
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8") + b"\n")
        for vec_id in ids:
            vec = np.asarray(vectors[vec_id], dtype="<f4")
            if vec.shape != (dim,):
                raise ValueError(f"vector {vec_id!r} has shape {vec.shape}, expected ({dim},)")
            id_bytes = vec_id.encode("utf-8")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(vec.tobytes())
