"""File formats: Matrix Market arrays, plain vectors and deterministic JSON."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import ParseError
from .problem import ProblemInstance

MM_HEADER = "%%MatrixMarket matrix array real general"


def _float(token: str, path, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"not a number: {token!r}", str(path), line) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {token!r}", str(path), line)
    return value


def read_matrix_market(path) -> np.ndarray:
    """Read a dense real matrix in Matrix Market array format (column-major)."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", str(path)) from None
    if not lines or lines[0].strip().lower() != MM_HEADER.lower():
        raise ParseError(f"expected header {MM_HEADER!r}", str(path), 1)
    rows = cols = None
    values: list[float] = []
    for no, raw in enumerate(lines[1:], start=2):
        text = raw.strip()
        if not text or text.startswith("%"):
            continue
        tokens = text.split()
        if rows is None:
            if len(tokens) != 2:
                raise ParseError("size line must hold two integers", str(path), no)
            try:
                rows, cols = int(tokens[0]), int(tokens[1])
            except ValueError:
                raise ParseError("size line must hold two integers", str(path), no) from None
            if rows < 1 or cols < 1:
                raise ParseError("dimensions must be positive", str(path), no)
            continue
        if len(tokens) != 1:
            raise ParseError("expected one value per line", str(path), no)
        if len(values) == rows * cols:
            raise ParseError(f"more than {rows * cols} values", str(path), no)
        values.append(_float(tokens[0], path, no))
    if rows is None:
        raise ParseError("missing size line", str(path), len(lines))
    if len(values) != rows * cols:
        raise ParseError(f"expected {rows * cols} values, found {len(values)}", str(path), len(lines))
    return np.array(values).reshape((cols, rows)).T.copy()


def write_matrix_market(path, A) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w") as fh:
        fh.write(MM_HEADER + "\n")
        fh.write(f"{A.shape[0]} {A.shape[1]}\n")
        for value in A.T.ravel():
            fh.write(f"{float(value)!r}\n")


def read_vector(path) -> np.ndarray:
    """One value per line; blank lines and ``#`` comments are skipped."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", str(path)) from None
    values = []
    for no, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        if len(text.split()) != 1:
            raise ParseError("expected one value per line", str(path), no)
        values.append(_float(text, path, no))
    if not values:
        raise ParseError("no values", str(path))
    return np.array(values)


def write_vector(path, b) -> None:
    with open(path, "w") as fh:
        for value in np.asarray(b, dtype=float).ravel():
            fh.write(f"{float(value)!r}\n")


def read_instance(matrix_path, rhs_path) -> ProblemInstance:
    A = read_matrix_market(matrix_path)
    b = read_vector(rhs_path)
    if b.shape[0] != A.shape[0]:
        raise ParseError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries", str(rhs_path))
    return ProblemInstance(A, b)


def write_instance(directory, instance: ProblemInstance) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    a_path, b_path = directory / "A.mtx", directory / "b.txt"
    write_matrix_market(a_path, instance.A)
    write_vector(b_path, instance.b)
    return a_path, b_path


def _format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = format(x, ".17g")
    if all(ch in "-0123456789" for ch in text):
        text += ".0"
    return text


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))
