"""Export sentence-embedding vectors for posts, fragments, or condition texts.

Reads line-delimited ``{"id", "text"}`` records, encodes them with a
sentence-embedding model, and writes the embedding file format consumed
by the main engine: a ``{"dim": N}`` header line followed by one
``{"id", "vec"}`` record per input. Vectors are emitted raw; the consumer
re-normalizes to unit length on load.

One model per output file. Pipelines that take the max similarity over
several models pass several files downstream.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

Encoder = Callable[[Sequence[str]], np.ndarray]


class ExportError(Exception):
    pass


def read_inputs(path: str | Path) -> list[tuple[str, str]]:
    """Parse input records, rejecting duplicates before any output is written."""
    records: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                rid, text = rec["id"], rec["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ExportError(f"{path}:{lineno}: malformed record: {exc}")
            if rid in seen:
                raise ExportError(f"{path}:{lineno}: duplicate id {rid!r}")
            seen.add(rid)
            records.append((rid, text))
    if not records:
        raise ExportError(f"{path}: no input records")
    return records


def load_encoder(model_id: str) -> Encoder:
    """Load a sentence-transformers checkpoint as an encoder callable."""
    try:
        from sentence_transformers import SentenceTransformer
    except ImportError as exc:
        raise ExportError(f"sentence-transformers is not installed: {exc}")
    try:
        model = SentenceTransformer(model_id)
    except Exception as exc:  # hub/network/checkpoint failures
        raise ExportError(f"could not load model {model_id!r}: {exc}")

    def encode(texts: Sequence[str]) -> np.ndarray:
        return np.asarray(model.encode(list(texts), convert_to_numpy=True))

    return encode


def export(
    inputs: list[tuple[str, str]],
    encode: Encoder,
    out_path: str | Path,
    batch_size: int = 32,
) -> int:
    """Encode inputs in batches and write the embedding file. Returns row count."""
    if batch_size < 1:
        raise ExportError("batch_size must be >= 1")
    ids = [rid for rid, _ in inputs]
    texts = [text for _, text in inputs]
    vectors: list[np.ndarray] = []
    for lo in range(0, len(texts), batch_size):
        batch = encode(texts[lo : lo + batch_size])
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[0] != len(texts[lo : lo + batch_size]):
            raise ExportError(f"encoder returned shape {batch.shape} for the batch at {lo}")
        vectors.extend(batch)
    dim = len(vectors[0])
    if any(len(v) != dim for v in vectors):
        raise ExportError("encoder returned vectors of differing dimensions")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim": dim}) + "\n")
        for rid, vec in zip(ids, vectors):
            fh.write(json.dumps({"id": rid, "vec": [float(x) for x in vec]}) + "\n")
    return len(ids)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--input", required=True, help='line-delimited {"id","text"} records')
    parser.add_argument("--model", required=True, help="sentence-transformers model id or path")
    parser.add_argument("--out", required=True, help="embedding file to write")
    parser.add_argument("--batch-size", type=int, default=32)
    args = parser.parse_args(argv)
    try:
        inputs = read_inputs(args.input)
        encode = load_encoder(args.model)
        count = export(inputs, encode, args.out, batch_size=args.batch_size)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} embeddings to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
