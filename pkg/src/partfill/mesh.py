"""Triangle mesh input (OFF/OBJ), normalization, and area-weighted surface sampling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshParseError(ValueError):
    """Malformed mesh file. The message carries the 1-based line number."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


@dataclass
class TriangleMesh:
    """Vertices (V, 3) float64 and faces (F, 3) int64 with 0-based indices."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)


def load_mesh(path) -> TriangleMesh:
    """Load a triangle mesh from an .off or .obj file.

    Only vertex positions and face connectivity are read; normals, texture
    coordinates and materials are ignored. Polygonal faces are fan-triangulated.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".off":
        return _load_off(path)
    if suffix == ".obj":
        return _load_obj(path)
    raise ValueError(f"unsupported mesh format {suffix!r} (expected .off or .obj): {path}")


def _content_lines(path):
    """Yield (lineno, tokens) for non-empty lines, comments stripped."""
    with open(path, "r", encoding="utf-8", errors="replace") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def _fan_triangulate(indices, n_vertices, path, lineno):
    if len(indices) < 3:
        raise MeshParseError(path, lineno, f"face with {len(indices)} vertices (need at least 3)")
    for idx in indices:
        if not 0 <= idx < n_vertices:
            raise MeshParseError(path, lineno, f"face index {idx} out of range [0, {n_vertices})")
    first = indices[0]
    return [(first, indices[k], indices[k + 1]) for k in range(1, len(indices) - 1)]


def _load_off(path) -> TriangleMesh:
    lines = list(_content_lines(path))
    if not lines:
        raise MeshParseError(path, 1, "empty OFF file")
    cursor = 0
    lineno, tokens = lines[cursor]
    if tokens[0].upper() != "OFF":
        raise MeshParseError(path, lineno, f"missing OFF header, got {tokens[0]!r}")
    tokens = tokens[1:]
    cursor += 1
    if not tokens:
        if cursor >= len(lines):
            raise MeshParseError(path, lineno + 1, "missing vertex/face counts")
        lineno, tokens = lines[cursor]
        cursor += 1
    if len(tokens) < 2:
        raise MeshParseError(path, lineno, "expected 'n_vertices n_faces [n_edges]' counts")
    try:
        n_vertices, n_faces = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise MeshParseError(path, lineno, f"non-integer counts: {' '.join(tokens)}") from None

    vertices = np.empty((n_vertices, 3), dtype=np.float64)
    for i in range(n_vertices):
        if cursor >= len(lines):
            raise MeshParseError(path, lines[-1][0] + 1, f"expected vertex {i + 1} of {n_vertices}, file ended")
        lineno, tokens = lines[cursor]
        cursor += 1
        if len(tokens) < 3:
            raise MeshParseError(path, lineno, f"vertex line needs 3 coordinates, got {len(tokens)}")
        try:
            vertices[i] = [float(tokens[0]), float(tokens[1]), float(tokens[2])]
        except ValueError:
            raise MeshParseError(path, lineno, f"bad vertex coordinates: {' '.join(tokens[:3])}") from None

    faces = []
    for i in range(n_faces):
        if cursor >= len(lines):
            raise MeshParseError(path, lines[-1][0] + 1, f"expected face {i + 1} of {n_faces}, file ended")
        lineno, tokens = lines[cursor]
        cursor += 1
        try:
            count = int(tokens[0])
            indices = [int(t) for t in tokens[1 : 1 + count]]
        except ValueError:
            raise MeshParseError(path, lineno, f"bad face line: {' '.join(tokens)}") from None
        if len(indices) != count:
            raise MeshParseError(path, lineno, f"face declares {count} indices but has {len(indices)}")
        faces.extend(_fan_triangulate(indices, n_vertices, path, lineno))
    return TriangleMesh(vertices, np.array(faces, dtype=np.int64).reshape(-1, 3))


def _load_obj(path) -> TriangleMesh:
    vertices = []
    faces = []
    for lineno, tokens in _content_lines(path):
        kind = tokens[0]
        if kind == "v":
            if len(tokens) < 4:
                raise MeshParseError(path, lineno, "vertex line needs 3 coordinates")
            try:
                vertices.append([float(tokens[1]), float(tokens[2]), float(tokens[3])])
            except ValueError:
                raise MeshParseError(path, lineno, f"bad vertex coordinates: {' '.join(tokens[1:4])}") from None
        elif kind == "f":
            indices = []
            for token in tokens[1:]:
                ref = token.split("/", 1)[0]
                try:
                    idx = int(ref)
                except ValueError:
                    raise MeshParseError(path, lineno, f"bad face index {token!r}") from None
                # OBJ indices are 1-based; negative ones count back from the
                # most recently defined vertex.
                idx = idx - 1 if idx > 0 else len(vertices) + idx
                indices.append(idx)
            faces.extend(_fan_triangulate(indices, len(vertices), path, lineno))
        # every other element type (vn, vt, usemtl, o, g, s, mtllib) is ignored
    if not vertices:
        raise MeshParseError(path, 1, "OBJ file contains no vertices")
    return TriangleMesh(np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_off(path, mesh: TriangleMesh) -> None:
    """Write a mesh as ASCII OFF (used by the dataset preparation fixtures)."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("OFF\n")
        handle.write(f"{len(mesh.vertices)} {len(mesh.faces)} 0\n")
        for v in mesh.vertices:
            handle.write(f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")
        for f in mesh.faces:
            handle.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def _fmt(value: float) -> str:
    return np.format_float_positional(float(value), unique=True, trim="0")


def normalize_mesh(mesh: TriangleMesh) -> TriangleMesh:
    """Center the vertex centroid at the origin and inscribe in the unit sphere.

    Uniform scaling only, so aspect ratios are preserved. The farthest vertex
    ends up at distance exactly 1 from the origin.
    """
    if len(mesh.vertices) == 0:
        raise ValueError("cannot normalize a mesh with no vertices")
    centered = mesh.vertices - mesh.vertices.mean(axis=0)
    scale = np.linalg.norm(centered, axis=1).max()
    if scale < 1e-12:
        raise ValueError("degenerate mesh: all vertices coincide")
    return TriangleMesh(centered / scale, mesh.faces.copy())


def triangle_areas(mesh: TriangleMesh) -> np.ndarray:
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def sample_surface(mesh: TriangleMesh, n: int, seed) -> np.ndarray:
    """Draw n points uniformly from the mesh surface.

    Triangles are selected with probability proportional to their area
    (cumulative-sum inversion); positions inside a triangle use uniform
    barycentric coordinates with reflection. Deterministic given the seed.
    """
    if n < 1:
        raise ValueError(f"need at least one sample, got n={n}")
    areas = triangle_areas(mesh)
    total = areas.sum()
    if total <= 0.0:
        raise ValueError("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(areas)
    cdf /= cdf[-1]
    tri = np.searchsorted(cdf, rng.random(n), side="right")
    tri = np.minimum(tri, len(areas) - 1)
    uv = rng.random((n, 2))
    flip = uv.sum(axis=1) > 1.0
    uv[flip] = 1.0 - uv[flip]
    a = mesh.vertices[mesh.faces[tri, 0]]
    b = mesh.vertices[mesh.faces[tri, 1]]
    c = mesh.vertices[mesh.faces[tri, 2]]
    return a + uv[:, :1] * (b - a) + uv[:, 1:] * (c - a)
