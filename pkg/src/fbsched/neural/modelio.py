"""Plain-text model files.

Layout::

    fbsched-mlp 1
    N <n_loops> M <n_hidden>
    w1 <rows> <cols>
    <row values ...>            one line per row
    b1 <len>
    <values>
    w2 <rows> <cols>
    ...
    b2 <len>
    in_norm <rows> 2
    out_norm <rows> 2

Numbers are written with repr(), which round-trips doubles exactly.
"""

from __future__ import annotations

import numpy as np

from ..errors import ModelParseError
from .network import MlpParams

MAGIC = "fbsched-mlp 1"


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_model(params: MlpParams, path) -> None:
    m, n = params.n_hidden, params.n_outputs
    lines = [MAGIC, f"N {n} M {m}"]
    for name, arr in (("w1", params.w1), ("b1", params.b1), ("w2", params.w2),
                      ("b2", params.b2), ("in_norm", params.in_norm),
                      ("out_norm", params.out_norm)):
        if arr.ndim == 1:
            lines.append(f"{name} {arr.shape[0]}")
            lines.append(_fmt(arr))
        else:
            lines.append(f"{name} {arr.shape[0]} {arr.shape[1]}")
            lines.extend(_fmt(row) for row in arr)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


class _Lines:
    def __init__(self, path, text):
        self.path = path
        self.lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines()) if ln.strip()]
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.lines):
            raise ModelParseError(f"{self.path}: unexpected end of file, expected {what}")
        item = self.lines[self.pos]
        self.pos += 1
        return item

    def fail(self, lineno, msg):
        raise ModelParseError(f"{self.path}:{lineno}: {msg}")


def _ints(src, lineno, parts, what):
    try:
        return [int(v) for v in parts]
    except ValueError:
        src.fail(lineno, f"bad {what} header")


def _block(src, name, expected_shape):
    lineno, line = src.next(f"block {name}")
    parts = line.split()
    if not parts or parts[0] != name:
        src.fail(lineno, f"expected block {name!r}, got {line[:30]!r}")
    shape = tuple(_ints(src, lineno, parts[1:], name))
    if shape != expected_shape:
        src.fail(lineno, f"{name} header says {shape}, dimensions require {expected_shape}")
    rows = 1 if len(shape) == 1 else shape[0]
    width = shape[-1]
    out = []
    for _ in range(rows):
        ln, text = src.next(f"{name} values")
        try:
            vals = [float(v) for v in text.split()]
        except ValueError:
            src.fail(ln, f"non-numeric value in {name}")
        if len(vals) != width:
            src.fail(ln, f"{name}: expected {width} values, found {len(vals)}")
        out.append(vals)
    arr = np.array(out)
    return arr[0] if len(shape) == 1 else arr


def load_model(path) -> MlpParams:
    with open(path) as fh:
        text = fh.read()
    src = _Lines(path, text)
    if not src.lines:
        raise ModelParseError(f"{path}: empty model file")
    lineno, line = src.next("magic")
    if line != MAGIC:
        src.fail(lineno, f"not a model file (expected {MAGIC!r})")
    lineno, line = src.next("dimension header")
    parts = line.split()
    if len(parts) != 4 or parts[0] != "N" or parts[2] != "M":
        src.fail(lineno, "expected 'N <n> M <m>'")
    n, m = _ints(src, lineno, (parts[1], parts[3]), "dimension")
    if n < 1 or m < 1:
        src.fail(lineno, "N and M must be >= 1")
    w1 = _block(src, "w1", (m, n + 1))
    b1 = _block(src, "b1", (m,))
    w2 = _block(src, "w2", (n, m))
    b2 = _block(src, "b2", (n,))
    in_norm = _block(src, "in_norm", (n + 1, 2))
    out_norm = _block(src, "out_norm", (n, 2))
    if src.pos != len(src.lines):
        src.fail(src.lines[src.pos][0], "trailing content")
    try:
        return MlpParams(w1, b1, w2, b2, in_norm, out_norm)
    except ValueError as exc:
        raise ModelParseError(f"{path}: {exc}") from None
