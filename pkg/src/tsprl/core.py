"""Instances, tours and instance file I/O.

Tours are plain ``int64`` numpy arrays holding a permutation of city
indices. Lengths are always cyclic: the closing edge back to the first city
is included.
"""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import IO, Iterable, Optional, Union

import numpy as np

LENGTH_ATOL = 1e-9


class ParseError(ValueError):
    """Raised for malformed instance files; carries the 1-based line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class TspInstance:
    """``n`` cities with coordinates in the unit square."""

    coords: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64, copy=True)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must have shape (n, 2), got {coords.shape}")
        if coords.shape[0] < 1:
            raise ValueError("an instance needs at least one city")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        if coords.min() < 0.0 or coords.max() > 1.0:
            raise ValueError("coordinates must lie in [0, 1]^2")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @cached_property
    def distances(self) -> np.ndarray:
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        d = np.sqrt((diff * diff).sum(-1))
        d.setflags(write=False)
        return d

    def __eq__(self, other):
        if not isinstance(other, TspInstance):
            return NotImplemented
        return np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash(self.coords.tobytes())

    def __len__(self):
        return self.n


def generate_instance(n: int, seed: int) -> TspInstance:
    """Uniform random instance, deterministic in ``(n, seed)``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return TspInstance(rng.random((n, 2)))


def generate_instances(n: int, count: int, seed: int) -> list[TspInstance]:
    """``count`` instances drawn from one seeded stream."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return [TspInstance(c) for c in rng.random((count, n, 2))]


def validate_tour(order: Iterable[int], n: int) -> Optional[str]:
    """Return ``None`` if ``order`` is a permutation of ``range(n)``, else a description."""
    order = list(order)
    if len(order) != n:
        return f"wrong length: expected {n} cities, got {len(order)}"
    seen = set()
    for pos, city in enumerate(order):
        if int(city) != city or not 0 <= city < n:
            return f"index out of range at position {pos}: {city}"
        if city in seen:
            return f"duplicate index {city} at position {pos}"
        seen.add(int(city))
    return None


def as_tour(order: Iterable[int], n: int) -> np.ndarray:
    problem = validate_tour(order, n)
    if problem is not None:
        raise ValueError(f"invalid tour: {problem}")
    return np.asarray(list(order), dtype=np.int64)


def tour_length(instance: TspInstance, tour) -> float:
    tour = as_tour(tour, instance.n)
    pts = instance.coords[tour]
    step = pts - np.roll(pts, -1, axis=0)
    return float(np.sqrt((step * step).sum(1)).sum())


def random_tour(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(n).astype(np.int64)


# -- file formats -----------------------------------------------------------

PathOrStream = Union[str, os.PathLike, IO[str]]


def _open_text(source: PathOrStream) -> tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8")), True
    return source, False


def write_instance(instance: TspInstance, dest: Optional[PathOrStream] = None) -> str:
    """Serialize to the native text format; also writes to ``dest`` when given.

    ``repr`` of a float round-trips exactly, so write/read is lossless.
    """
    lines = [str(instance.n)]
    lines.extend(f"{x!r} {y!r}" for x, y in instance.coords.tolist())
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, os.PathLike)):
        Path(dest).write_text(text, encoding="utf-8")
    elif dest is not None:
        dest.write(text)
    return text


def read_instance(source: PathOrStream) -> TspInstance:
    """Read a native or TSPLIB EUC_2D instance (format sniffed from the first line)."""
    stream, close = _open_text(source)
    try:
        lines = stream.read().splitlines()
    finally:
        if close:
            stream.close()
    first = next((ln for ln in lines if ln.strip()), "")
    try:
        int(first.strip())
    except ValueError:
        return _parse_tsplib(lines)
    return _parse_native(lines)


def _parse_native(lines: list[str]) -> TspInstance:
    if not lines:
        raise ParseError("empty file", 1)
    try:
        n = int(lines[0].strip())
    except ValueError:
        raise ParseError(f"expected city count, got {lines[0]!r}", 1) from None
    if n < 1:
        raise ParseError(f"city count must be >= 1, got {n}", 1)
    coords = np.empty((n, 2))
    for i in range(n):
        lineno = i + 2
        if i + 1 >= len(lines):
            raise ParseError(f"truncated file: expected {n} coordinate rows, found {i}", lineno)
        parts = lines[i + 1].split()
        if len(parts) != 2:
            raise ParseError(f"expected 'x y', got {lines[i + 1]!r}", lineno)
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise ParseError(f"non-numeric coordinate in {lines[i + 1]!r}", lineno) from None
        if not (math.isfinite(x) and math.isfinite(y) and 0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise ParseError(f"coordinate outside [0, 1]^2: {lines[i + 1]!r}", lineno)
        coords[i] = x, y
    for j, extra in enumerate(lines[n + 1:], start=n + 2):
        if extra.strip():
            raise ParseError(f"unexpected trailing content {extra!r}", j)
    return TspInstance(coords)


def _parse_tsplib(lines: list[str]) -> TspInstance:
    header: dict[str, str] = {}
    rows: list[tuple[float, float]] = []
    in_coords = False
    dimension = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        if in_coords:
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"expected 'id x y' in NODE_COORD_SECTION, got {line!r}", lineno)
            try:
                rows.append((float(parts[1]), float(parts[2])))
            except ValueError:
                raise ParseError(f"non-numeric coordinate in {line!r}", lineno) from None
            continue
        if line.startswith("NODE_COORD_SECTION"):
            if header.get("EDGE_WEIGHT_TYPE", "EUC_2D") != "EUC_2D":
                raise ParseError(f"unsupported EDGE_WEIGHT_TYPE {header['EDGE_WEIGHT_TYPE']}", lineno)
            if dimension is None:
                raise ParseError("NODE_COORD_SECTION before DIMENSION", lineno)
            in_coords = True
            continue
        if ":" not in line:
            raise ParseError(f"malformed header line {line!r}", lineno)
        key, value = (s.strip() for s in line.split(":", 1))
        header[key.upper()] = value
        if key.upper() == "DIMENSION":
            try:
                dimension = int(value)
            except ValueError:
                raise ParseError(f"bad DIMENSION {value!r}", lineno) from None
            if dimension < 1:
                raise ParseError(f"DIMENSION must be >= 1, got {dimension}", lineno)
    if not in_coords:
        raise ParseError("missing NODE_COORD_SECTION", len(lines))
    if len(rows) != dimension:
        raise ParseError(f"DIMENSION is {dimension} but {len(rows)} coordinates were read", len(lines))
    return TspInstance(rescale_unit_square(np.array(rows, dtype=np.float64)), name=header.get("NAME", ""))


def rescale_unit_square(points: np.ndarray) -> np.ndarray:
    """Shift to the origin and divide by the larger axis span (aspect ratio kept)."""
    points = points - points.min(axis=0)
    span = points.max()
    if span > 0:
        points = points / span
    return np.clip(points, 0.0, 1.0)
