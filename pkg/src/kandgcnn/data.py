"""OFF mesh parsing, surface sampling, normalization/augmentation and the ``KDC1`` cache.

Cache layout (little-endian)::

    b"KDC1" | u32 cloud count
    per cloud: u32 label | u32 point count | point_count x 3 f32
"""
from __future__ import annotations

import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError, ParseError

CACHE_MAGIC = b"KDC1"
SYNTH_CLASSES = ("sphere", "cube", "cylinder", "torus")
SCALE_RANGE = (2.0 / 3.0, 3.0 / 2.0)
SHIFT_RANGE = 0.2


@dataclass
class Mesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (T, 3) int64


@dataclass
class DatasetCache:
    points: list = field(default_factory=list)  # per cloud (N, 3) float32
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    split: str = "train"

    def __len__(self):
        return len(self.points)

    def stacked(self, num_points=None) -> np.ndarray:
        """All clouds as one float64 array, truncated to the first ``num_points`` points."""
        if not self.points:
            raise FormatError("dataset is empty")
        counts = {p.shape[0] for p in self.points}
        n = min(counts) if num_points is None else num_points
        if min(counts) < n:
            raise FormatError(f"dataset clouds have {min(counts)} points, {n} requested")
        return np.stack([p[:n] for p in self.points]).astype(np.float64)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def parse_off(data) -> Mesh:
    """Parse an ASCII OFF mesh, fan-triangulating polygons with more than three corners.

    The leading ``OFF`` keyword is optional and may be fused with the counts
    (``OFF490 518 0``), as in a number of ModelNet40 files.
    """
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8", errors="replace")
    rows = []
    for lineno, raw in enumerate(data.splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if text:
            rows.append((lineno, text))
    if not rows:
        raise ParseError("empty OFF input", 1)
    pos = 0
    lineno, text = rows[0]
    if text.upper().startswith("OFF"):
        text = text[3:].strip()
        if not text:
            pos = 1
            if pos >= len(rows):
                raise ParseError("missing counts line after OFF header", lineno)
            lineno, text = rows[pos]
    tokens = text.split()
    try:
        counts = [int(t) for t in tokens]
    except ValueError:
        raise ParseError(f"malformed counts line {text!r}", lineno) from None
    if len(counts) < 2 or counts[0] < 0 or counts[1] < 0:
        raise ParseError(f"malformed counts line {text!r}", lineno)
    nv, nf = counts[0], counts[1]
    pos += 1
    if len(rows) - pos < nv + nf:
        last = rows[-1][0]
        raise ParseError(f"expected {nv} vertices and {nf} faces, file ends early", last)
    vertices = np.empty((nv, 3))
    for i in range(nv):
        lineno, text = rows[pos + i]
        parts = text.split()
        try:
            if len(parts) < 3:
                raise ValueError
            vertices[i] = [float(v) for v in parts[:3]]
        except ValueError:
            raise ParseError(f"malformed vertex {text!r}", lineno) from None
    pos += nv
    tris = []
    for i in range(nf):
        lineno, text = rows[pos + i]
        try:
            parts = [int(t) for t in text.split()]
        except ValueError:
            raise ParseError(f"malformed face {text!r}", lineno) from None
        if not parts:
            raise ParseError("empty face line", lineno)
        arity = parts[0]
        if arity < 3:
            raise ParseError(f"face arity {arity} < 3", lineno)
        idx = parts[1:1 + arity]
        if len(idx) < arity:
            raise ParseError(f"face lists {len(idx)} of {arity} indices", lineno)
        for v in idx:
            if not 0 <= v < nv:
                raise ParseError(f"vertex index {v} out of range [0, {nv})", lineno)
        for j in range(1, arity - 1):
            tris.append((idx[0], idx[j], idx[j + 1]))
    faces = np.array(tris, dtype=np.int64).reshape(-1, 3)
    return Mesh(vertices, faces)


def triangle_areas(mesh: Mesh) -> np.ndarray:
    a, b, c = (mesh.vertices[mesh.faces[:, i]] for i in range(3))
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def sample_surface(mesh: Mesh, n: int, seed=None) -> np.ndarray:
    """``n`` i.i.d. points uniform over the mesh surface (area-weighted triangle choice)."""
    areas = triangle_areas(mesh)
    total = areas.sum()
    if not total > 0:
        raise DomainError("mesh has zero surface area")
    rng = _rng(seed)
    tri = rng.choice(len(areas), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    f = mesh.faces[tri]
    a = mesh.vertices[f[:, 0]]
    b = mesh.vertices[f[:, 1]]
    c = mesh.vertices[f[:, 2]]
    return a + u[:, None] * (b - a) + v[:, None] * (c - a)


def normalize_sphere(points) -> np.ndarray:
    """Center on the centroid and scale so the farthest point has norm 1."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise DomainError("need at least one point to normalize")
    centered = points - points.mean(axis=0)
    radius = np.linalg.norm(centered, axis=1).max()
    if not radius > 0:
        raise DomainError("cannot normalize a cloud whose points all coincide")
    return centered / radius


def augment(points, seed=None) -> np.ndarray:
    """Independent per-axis scale in [2/3, 3/2] followed by per-axis shift in [-0.2, 0.2]."""
    rng = _rng(seed)
    scale = rng.uniform(SCALE_RANGE[0], SCALE_RANGE[1], size=3)
    shift = rng.uniform(-SHIFT_RANGE, SHIFT_RANGE, size=3)
    return np.asarray(points, dtype=np.float64) * scale + shift


# -- synthetic shapes -------------------------------------------------------

def _unit_vectors(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sphere(rng, n, jitter):
    return _unit_vectors(rng, n) * (1.0 + rng.uniform(-jitter, jitter, size=(n, 1)))


def _cube(rng, n, jitter):
    pts = rng.uniform(-1.0, 1.0, size=(n, 3))
    axis = rng.integers(0, 3, size=n)
    side = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    pts[np.arange(n), axis] = side
    return pts + rng.uniform(-jitter, jitter, size=(n, 3))


def _cylinder(rng, n, jitter):
    # lateral area 4*pi vs caps 2*pi for radius 1, height 2
    on_side = rng.random(n) < 2.0 / 3.0
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    radius = np.where(on_side, 1.0, np.sqrt(rng.random(n)))
    z = np.where(on_side, rng.uniform(-1.0, 1.0, size=n), np.where(rng.random(n) < 0.5, -1.0, 1.0))
    pts = np.stack([radius * np.cos(theta), radius * np.sin(theta), z], axis=1)
    return pts + rng.uniform(-jitter, jitter, size=(n, 3))


def _torus(rng, n, jitter, major=1.0, minor=0.35):
    out = np.empty((0, 3))
    while len(out) < n:
        u = rng.uniform(0.0, 2.0 * np.pi, size=2 * n)
        v = rng.uniform(0.0, 2.0 * np.pi, size=2 * n)
        # area element is proportional to major + minor*cos(v)
        keep = rng.random(2 * n) * (major + minor) < major + minor * np.cos(v)
        u, v = u[keep], v[keep]
        ring = major + minor * np.cos(v)
        out = np.concatenate(
            [out, np.stack([ring * np.cos(u), ring * np.sin(u), minor * np.sin(v)], axis=1)]
        )
    return out[:n] + rng.uniform(-jitter, jitter, size=(n, 3))


_GENERATORS = {"sphere": _sphere, "cube": _cube, "cylinder": _cylinder, "torus": _torus}


def synth_shape(name, n_points, rng, jitter=0.02) -> np.ndarray:
    """Raw (un-normalized) surface samples of one synthetic shape."""
    return _GENERATORS[name](rng, n_points, jitter)


def synth_dataset(num_per_class, n_points, seed, split="train", num_classes=4) -> DatasetCache:
    """Class-balanced sphere/cube/cylinder/torus clouds, sphere-normalized, deterministic per seed."""
    if not 1 <= num_classes <= len(SYNTH_CLASSES):
        raise DomainError(f"synthetic data offers 1..{len(SYNTH_CLASSES)} classes")
    rng = np.random.default_rng([int(seed), 0 if split == "train" else 1])
    points, labels = [], []
    for label, name in enumerate(SYNTH_CLASSES[:num_classes]):
        for _ in range(num_per_class):
            cloud = normalize_sphere(synth_shape(name, n_points, rng))
            points.append(cloud.astype(np.float32))
            labels.append(label)
    return DatasetCache(points, np.array(labels, dtype=np.int64), split)


# -- cache I/O --------------------------------------------------------------

def encode_cache(cache: DatasetCache) -> bytes:
    parts = [CACHE_MAGIC, struct.pack("<I", len(cache))]
    for pts, label in zip(cache.points, cache.labels):
        pts = np.ascontiguousarray(pts, dtype="<f4")
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise FormatError(f"cache clouds must be (N, 3), got {pts.shape}")
        parts.append(struct.pack("<II", int(label), pts.shape[0]))
        parts.append(pts.tobytes())
    return b"".join(parts)


def decode_cache(data: bytes, split="train") -> DatasetCache:
    if data[:4] != CACHE_MAGIC:
        raise FormatError(f"not a dataset cache: magic {data[:4]!r}")
    if len(data) < 8:
        raise FormatError("dataset cache truncated in header")
    (count,) = struct.unpack_from("<I", data, 4)
    pos = 8
    points, labels = [], []
    for i in range(count):
        if pos + 8 > len(data):
            raise FormatError(f"dataset cache truncated at cloud {i}")
        label, npts = struct.unpack_from("<II", data, pos)
        pos += 8
        nbytes = 12 * npts
        if pos + nbytes > len(data):
            raise FormatError(f"dataset cache truncated inside cloud {i}")
        points.append(np.frombuffer(data, dtype="<f4", count=3 * npts, offset=pos)
                      .reshape(npts, 3).astype(np.float32))
        labels.append(label)
        pos += nbytes
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after dataset cache payload")
    return DatasetCache(points, np.array(labels, dtype=np.int64), split)


def write_cache(path, cache: DatasetCache) -> None:
    Path(path).write_bytes(encode_cache(cache))


def read_cache(path, split=None) -> DatasetCache:
    path = Path(path)
    if split is None:
        split = "test" if path.stem == "test" else "train"
    return decode_cache(path.read_bytes(), split)


def load_split(data_dir, split) -> DatasetCache:
    return read_cache(Path(data_dir) / f"{split}.kdc", split)


# -- ModelNet40 conversion --------------------------------------------------

def discover_modelnet(root) -> tuple[list, dict]:
    """Class names in sorted order and ``{split: [(path, label), ...]}``."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"ModelNet directory {root} does not exist")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise FormatError(f"no class directories under {root}")
    files = {}
    for split in ("train", "test"):
        entries = []
        for label, name in enumerate(classes):
            for f in sorted((root / name / split).glob("*.off")):
                entries.append((f, label))
        files[split] = entries
    return classes, files


def _convert_one(job):
    path, label, n_points, seed, index = job
    try:
        mesh = parse_off(Path(path).read_bytes())
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None
    rng = np.random.default_rng([int(seed), index])
    cloud = normalize_sphere(sample_surface(mesh, n_points, rng))
    return cloud.astype(np.float32), label


def convert_modelnet(root, out_dir, n_points=1024, seed=0, workers=1) -> list:
    """Write ``train.kdc``, ``test.kdc`` and ``classes.txt`` under ``out_dir``; returns class names.

    Each mesh gets its own generator seeded by ``(seed, file index)``, so the
    output does not depend on the worker count.
    """
    classes, files = discover_modelnet(root)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    offset = 0
    for split in ("train", "test"):
        jobs = [(str(p), label, n_points, seed, offset + i)
                for i, (p, label) in enumerate(files[split])]
        offset += len(jobs)
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_convert_one, jobs, chunksize=16))
        else:
            results = [_convert_one(job) for job in jobs]
        cache = DatasetCache([r[0] for r in results],
                             np.array([r[1] for r in results], dtype=np.int64), split)
        write_cache(out_dir / f"{split}.kdc", cache)
    (out_dir / "classes.txt").write_text(
        "".join(f"{i}\t{name}\n" for i, name in enumerate(classes))
    )
    return classes
