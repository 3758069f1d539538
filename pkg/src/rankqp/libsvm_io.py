"""LIBSVM sparse text format: parse and emit.

Line grammar is ``<label> (<index>:<value>)*`` with whitespace separation,
1-based strictly increasing indices per line, and ``#`` starting a comment
that runs to end of line.  The emitter prints values with ``repr`` so a
parse/emit round trip is bit exact on emitter output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ParseError


@dataclass
class Dataset:
    rows: list          # per row: (indices int array 0-based, values float array)
    y: np.ndarray
    d: int              # feature count = max 1-based index seen

    @property
    def n(self):
        return len(self.rows)

    def to_dense(self):
        X = np.zeros((self.n, self.d))
        for i, (idx, vals) in enumerate(self.rows):
            X[i, idx] = vals
        return X

    @staticmethod
    def from_dense(X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        rows = []
        for row in X:
            idx = np.nonzero(row)[0]
            rows.append((idx, row[idx].copy()))
        return Dataset(rows=rows, y=np.asarray(y, dtype=float), d=X.shape[1])


def parse_libsvm_lines(lines):
    rows = []
    labels = []
    d = 0
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        tokens = text.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(f"unparsable label {tokens[0]!r}", line=lineno) from None
        idx = []
        vals = []
        prev = 0
        for tok in tokens[1:]:
            if ":" not in tok:
                raise ParseError(f"expected index:value, got {tok!r}", line=lineno)
            si, sv = tok.split(":", 1)
            try:
                i = int(si)
            except ValueError:
                raise ParseError(f"unparsable index {si!r}", line=lineno) from None
            try:
                v = float(sv)
            except ValueError:
                raise ParseError(f"unparsable value {sv!r}", line=lineno) from None
            if i <= prev:
                raise ParseError(f"non-increasing index {i} after {prev}", line=lineno)
            if i < 1:
                raise ParseError(f"index {i} must be >= 1", line=lineno)
            prev = i
            idx.append(i - 1)
            vals.append(v)
        d = max(d, prev)
        labels.append(label)
        rows.append((np.array(idx, dtype=int), np.array(vals, dtype=float)))
    return Dataset(rows=rows, y=np.array(labels), d=d)


def parse_libsvm(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_libsvm_lines(fh)


def _fmt(x):
    return repr(float(x))


def emit_libsvm_lines(ds: Dataset):
    out = []
    for (idx, vals), label in zip(ds.rows, ds.y):
        parts = [_fmt(label)]
        parts.extend(f"{i + 1}:{_fmt(v)}" for i, v in zip(idx, vals))
        out.append(" ".join(parts))
    return out


def emit_libsvm(ds: Dataset, path):
    with open(path, "w", encoding="utf-8") as fh:
        for line in emit_libsvm_lines(ds):
            fh.write(line + "\n")
