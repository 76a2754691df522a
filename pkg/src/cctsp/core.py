"""Instances, tours, distances, TSPLIB I/O and seeded random streams.

All city indices are 0-based. TSPLIB files number nodes from 1; the parser
shifts them down and the writers shift them back up.
"""
from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "City",
    "TspInstance",
    "Tour",
    "DistanceMode",
    "RngStream",
    "TourError",
    "TsplibError",
    "MATRIX_THRESHOLD",
    "validate_permutation",
    "tour_length",
    "population_lengths",
    "distance_matrix",
    "parse_tsplib",
    "read_tsplib",
    "read_sidecar",
    "write_tsplib",
    "write_tour",
    "generate_uniform_instance",
]

# Above this many cities no N x N matrix is ever built.
MATRIX_THRESHOLD = 4096


class TourError(ValueError):
    """Raised for sequences that are not a permutation of the instance."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class TsplibError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class City(NamedTuple):
    x: float
    y: float


class DistanceMode(enum.Enum):
    EXACT = "exact"
    ROUNDED = "rounded"  # TSPLIB EUC_2D: nint(d) per edge


@dataclass(frozen=True, eq=False)
class TspInstance:
    """An immutable set of 2-D cities.

    ``coords`` is stored as a read-only ``(N, 2)`` float64 array, so an
    instance can be handed to several workers without copying.
    """

    name: str
    coords: np.ndarray
    known_optimum: float | None = None

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64, copy=True)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must have shape (N, 2), got {coords.shape}")
        if coords.shape[0] < 2:
            raise ValueError("an instance needs at least 2 cities")
        if not np.all(np.isfinite(coords)):
            raise ValueError("city coordinates must be finite")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def __len__(self) -> int:
        return self.n

    @property
    def cities(self) -> list[City]:
        return [City(float(x), float(y)) for x, y in self.coords]

    @classmethod
    def from_cities(cls, name: str, cities: Iterable[Sequence[float]],
                    known_optimum: float | None = None) -> "TspInstance":
        return cls(name, np.asarray(list(cities), dtype=np.float64), known_optimum)


def validate_permutation(order, n: int) -> np.ndarray:
    """Return ``order`` as an int array, raising TourError if it is not a
    permutation of ``0..n-1``."""
    arr = np.asarray(order)
    if arr.ndim != 1 or arr.size != n:
        raise TourError(f"tour has {arr.size} entries, expected {n}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        raise TourError("tour entries must be integers")
    arr = arr.astype(np.int64, copy=False)
    bad = np.flatnonzero((arr < 0) | (arr >= n))
    if bad.size:
        idx = int(arr[bad[0]])
        raise TourError(f"city index {idx} out of range 0..{n - 1}", idx)
    counts = np.bincount(arr, minlength=n)
    dup = np.flatnonzero(counts > 1)
    if dup.size:
        raise TourError(f"city index {int(dup[0])} appears {counts[dup[0]]} times",
                        int(dup[0]))
    return arr


@dataclass
class Tour:
    order: np.ndarray
    length_cache: float | None = field(default=None, compare=False)

    def __post_init__(self):
        self.order = np.asarray(self.order, dtype=np.int64)

    def __len__(self) -> int:
        return self.order.size

    def length(self, instance: TspInstance,
               mode: DistanceMode = DistanceMode.EXACT) -> float:
        if mode is DistanceMode.EXACT and self.length_cache is not None:
            return self.length_cache
        value = tour_length(instance, self, mode)
        if mode is DistanceMode.EXACT:
            self.length_cache = value
        return value


def _edge_lengths(coords: np.ndarray, order: np.ndarray,
                  mode: DistanceMode) -> np.ndarray:
    pts = coords[order]
    diff = np.roll(pts, -1, axis=-2) - pts
    d = np.hypot(diff[..., 0], diff[..., 1])
    if mode is DistanceMode.ROUNDED:
        d = np.floor(d + 0.5)
    return d


def tour_length(instance: TspInstance | np.ndarray, tour,
                mode: DistanceMode = DistanceMode.EXACT) -> float:
    """Closed tour length; the edge from the last city back to the first
    is always included."""
    coords = instance.coords if isinstance(instance, TspInstance) else np.asarray(instance)
    order = tour.order if isinstance(tour, Tour) else tour
    order = validate_permutation(order, coords.shape[0])
    return float(_edge_lengths(coords, order, mode).sum())


def population_lengths(coords: np.ndarray, population: np.ndarray,
                       mode: DistanceMode = DistanceMode.EXACT) -> np.ndarray:
    """Lengths of every row of a ``(P, N)`` population, no validation."""
    return _edge_lengths(coords, population, mode).sum(axis=-1)


def distance_matrix(coords: np.ndarray, mode: DistanceMode = DistanceMode.EXACT,
                    *, allow_large: bool = False) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape[0] > MATRIX_THRESHOLD and not allow_large:
        raise MemoryError(f"refusing to build a {coords.shape[0]}^2 distance matrix "
                          f"(threshold {MATRIX_THRESHOLD})")
    diff = coords[:, None, :] - coords[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    if mode is DistanceMode.ROUNDED:
        d = np.floor(d + 0.5)
    return d


class RngStream:
    """PCG64 generator addressed by ``(seed, key path)``.

    Child streams come from :class:`numpy.random.SeedSequence` spawn keys,
    so ``RngStream(s).child("ga", 3)`` draws the same numbers on every run
    and platform. String keys are folded to 32-bit integers with BLAKE2b.
    Generator methods (``random``, ``integers``, ...) are forwarded.
    """

    def __init__(self, seed: int, key: Sequence[int] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, *key) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(_key_to_int(k) for k in key))

    @property
    def state(self) -> dict:
        return self.generator.bit_generator.state

    def __getattr__(self, name):
        return getattr(self.generator, name)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self.key})"


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    digest = hashlib.blake2b(str(key).encode(), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def generate_uniform_instance(n: int, rng: RngStream | np.random.Generator,
                              name: str | None = None) -> TspInstance:
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    coords = rng.random((n, 2))
    return TspInstance(name or f"uniform{n}", coords)


_REQUIRED_KEYS = ("NAME", "DIMENSION", "EDGE_WEIGHT_TYPE")


def parse_tsplib(text: bytes | str, known_optimum: float | None = None) -> TspInstance:
    """Parse the EUC_2D node-coordinate subset of TSPLIB."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    header: dict[str, tuple[str, int]] = {}
    coords: list[tuple[float, float]] = []
    ids: list[int] = []
    in_coords = False
    coord_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.upper() == "EOF":
            break
        if in_coords and (":" in line or line.upper().endswith("_SECTION")):
            in_coords = False
        if in_coords:
            parts = line.split()
            if len(parts) != 3:
                raise TsplibError(f"expected 'index x y', got {line!r}", lineno)
            try:
                ids.append(int(parts[0]))
                x, y = float(parts[1]), float(parts[2])
            except ValueError:
                raise TsplibError(f"non-numeric coordinate line {line!r}", lineno) from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise TsplibError("non-finite coordinate", lineno)
            coords.append((x, y))
            continue
        if line.upper().startswith("NODE_COORD_SECTION"):
            in_coords = True
            coord_line = lineno
            continue
        if ":" in line:
            key, _, value = line.partition(":")
            header[key.strip().upper()] = (value.strip(), lineno)
        elif line.upper().endswith("_SECTION"):
            raise TsplibError(f"unsupported section {line!r}", lineno)

    for key in _REQUIRED_KEYS:
        if key not in header:
            raise TsplibError(f"missing header key {key}")
    ewt, ewt_line = header["EDGE_WEIGHT_TYPE"]
    if ewt.upper() != "EUC_2D":
        raise TsplibError(f"unsupported EDGE_WEIGHT_TYPE {ewt}", ewt_line)
    dim_text, dim_line = header["DIMENSION"]
    try:
        dim = int(dim_text)
    except ValueError:
        raise TsplibError(f"DIMENSION is not an integer: {dim_text!r}", dim_line) from None
    if not coord_line:
        raise TsplibError("missing NODE_COORD_SECTION")
    if len(coords) != dim:
        raise TsplibError(f"coordinate count mismatch: DIMENSION {dim}, "
                          f"found {len(coords)}", coord_line)
    if sorted(ids) != list(range(1, dim + 1)):
        raise TsplibError("node indices must be 1..DIMENSION", coord_line)
    order = np.argsort(ids, kind="stable")
    # file order and index order agree for every TSPLIB file we have seen;
    # sorting only matters for hand-written inputs
    arr = np.asarray(coords, dtype=np.float64)[order]
    return TspInstance(header["NAME"][0], arr, known_optimum)


def read_sidecar(path: str | Path) -> dict[str, float]:
    """Read ``name optimum`` lines; blank lines and ``#`` comments skipped."""
    optima = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, value = line.split()
        optima[name] = float(value)
    return optima


def read_tsplib(path: str | Path, sidecar: str | Path | None = None) -> TspInstance:
    """Load a ``.tsp`` file. The optimum comes from ``sidecar`` if given,
    else from ``<stem>.opt`` next to the file when that exists."""
    path = Path(path)
    inst = parse_tsplib(path.read_bytes())
    if sidecar is None and path.with_suffix(".opt").exists():
        sidecar = path.with_suffix(".opt")
    if sidecar is not None:
        optimum = read_sidecar(sidecar).get(inst.name)
        if optimum is not None:
            inst = TspInstance(inst.name, inst.coords, optimum)
    return inst


def write_tsplib(instance: TspInstance, comment: str | None = None) -> str:
    lines = [f"NAME : {instance.name}", "TYPE : TSP"]
    if comment:
        lines.append(f"COMMENT : {comment}")
    lines += [f"DIMENSION : {instance.n}", "EDGE_WEIGHT_TYPE : EUC_2D",
              "NODE_COORD_SECTION"]
    lines += [f"{i + 1} {x!r} {y!r}" for i, (x, y) in
              enumerate(instance.coords.tolist())]
    lines.append("EOF")
    return "\n".join(lines) + "\n"


def write_tour(name: str, order: Sequence[int], length: float | None = None) -> str:
    """TSPLIB TOUR_SECTION text (1-based, terminated by -1)."""
    order = list(map(int, order))
    lines = [f"NAME : {name}", "TYPE : TOUR"]
    if length is not None:
        lines.append(f"COMMENT : length {length!r}")
    lines += [f"DIMENSION : {len(order)}", "TOUR_SECTION"]
    lines += [str(i + 1) for i in order]
    lines += ["-1", "EOF"]
    return "\n".join(lines) + "\n"
