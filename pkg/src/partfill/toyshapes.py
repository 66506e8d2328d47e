"""Procedural desk-scale shapes: sphere, box, cylinder, torus.

Box, cylinder and torus are triangle meshes with randomized proportions that
go through the normal normalize-then-sample path. The sphere cloud is drawn
directly on the analytic surface (normalized Gaussian directions), so every
point sits at distance exactly 1; a tessellated stand-in would put sampled
points on chords strictly inside the sphere.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh, normalize_mesh, sample_surface

KINDS = ("sphere", "box", "cylinder", "torus")


def box_mesh(extents) -> TriangleMesh:
    ex, ey, ez = np.asarray(extents, dtype=np.float64) / 2.0
    vertices = np.array(
        [[sx * ex, sy * ey, sz * ez] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    )
    # vertex index = 4*sx + 2*sy + sz with (-1 -> 0, 1 -> 1)
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return TriangleMesh(vertices, np.array(faces))


def cylinder_mesh(radius: float, height: float, segments: int = 64) -> TriangleMesh:
    angles = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    top = np.hstack([ring, np.full((segments, 1), height / 2.0)])
    bottom = np.hstack([ring, np.full((segments, 1), -height / 2.0)])
    centers = np.array([[0.0, 0.0, height / 2.0], [0.0, 0.0, -height / 2.0]])
    vertices = np.vstack([top, bottom, centers])
    top_center, bottom_center = len(vertices) - 2, len(vertices) - 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces.append((i, j, segments + i))  # side quad, upper triangle
        faces.append((j, segments + j, segments + i))
        faces.append((top_center, i, j))  # caps
        faces.append((bottom_center, segments + j, segments + i))
    return TriangleMesh(vertices, np.array(faces))


def torus_mesh(major_radius: float, minor_radius: float, n_major: int = 48, n_minor: int = 24) -> TriangleMesh:
    u = 2.0 * np.pi * np.arange(n_major) / n_major
    v = 2.0 * np.pi * np.arange(n_minor) / n_minor
    uu, vv = np.meshgrid(u, v, indexing="ij")
    radial = major_radius + minor_radius * np.cos(vv)
    vertices = np.stack(
        [radial * np.cos(uu), radial * np.sin(uu), minor_radius * np.sin(vv)], axis=2
    ).reshape(-1, 3)
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = i * n_minor + (j + 1) % n_minor
            c = ((i + 1) % n_major) * n_minor + j
            d = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            faces.append((a, b, c))
            faces.append((b, d, c))
    return TriangleMesh(vertices, np.array(faces))


def unit_sphere_cloud(n: int, rng: np.random.Generator) -> np.ndarray:
    directions = rng.standard_normal((n, 3))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    return directions / norms


def toy_cloud(kind: str, rng: np.random.Generator, n_points: int = 8192) -> np.ndarray:
    """A normalized 8192-point cloud of the requested kind, with randomized
    proportions for the mesh-backed shapes."""
    if kind == "sphere":
        return unit_sphere_cloud(n_points, rng)
    if kind == "box":
        mesh = box_mesh(rng.uniform(0.5, 2.0, size=3))
    elif kind == "cylinder":
        mesh = cylinder_mesh(radius=rng.uniform(0.3, 0.9), height=rng.uniform(0.8, 2.5))
    elif kind == "torus":
        mesh = torus_mesh(major_radius=1.0, minor_radius=rng.uniform(0.15, 0.45))
    else:
        raise ValueError(f"unknown toy shape kind {kind!r}")
    surface_seed = rng.integers(0, 2**63 - 1)
    return sample_surface(normalize_mesh(mesh), n_points, surface_seed)
