"""Watertight vessel triangle meshes, topology validation and quality metrics"""
import math
from collections import Counter

import numpy as np
import torch

from vesselfit.utils.bspline import DTYPE
from vesselfit.utils.error import ArgumentError, DegenerateGeometryError


class TriangleMesh(object):
    """Indexed triangle surface.

    Args:
        vertices: (V, 3) float tensor (may require grad) or array, voxel units
        faces: (F, 3) int array, wound counter-clockwise seen from outside
    """

    def __init__(self, vertices, faces):
        self.vertices = torch.as_tensor(vertices, dtype=DTYPE)
        self.faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def vertices_numpy(self):
        return self.vertices.detach().numpy()

    def triangles(self):
        """(F, 3, 3) array of face corner coordinates"""
        return self.vertices_numpy()[self.faces]

    def edges(self):
        """(E, 2) array of unique undirected edges, sorted per row"""
        directed = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        return np.unique(np.sort(directed, axis=1), axis=0)

    def euler_characteristic(self):
        return self.n_vertices - self.edges().shape[0] + self.n_faces

    def signed_volume(self):
        """Enclosed volume by the divergence theorem; positive for outward-facing winding"""
        v = self.vertices
        a, b, c = v[self.faces[:, 0]], v[self.faces[:, 1]], v[self.faces[:, 2]]
        return (a * torch.linalg.cross(b, c, dim=1)).sum() / 6.0

    def bounds(self):
        v = self.vertices_numpy()
        return v.min(axis=0), v.max(axis=0)

    def remove_face(self, index):
        """A copy of the mesh without face `index`"""
        return TriangleMesh(self.vertices, np.delete(self.faces, index, axis=0))


def build_vessel_mesh(points, centers_first_last):
    """Build the closed vessel surface from S x P cross-section points.

    Vertex n * P + k is P_k^n, followed by the first and last centerline points. Every side
    quad (P_k^n, P_k^n+1, P_k+1^n+1, P_k+1^n) is split along P_k^n - P_k+1^n+1 and both ends
    are closed by triangle fans around the centerline endpoints, giving P*S + 2 vertices
    and 2*P*S faces.
    """
    points = torch.as_tensor(points, dtype=DTYPE)
    if points.dim() != 3 or points.shape[2] != 3:
        raise ArgumentError("Cross-section points must have shape (S, P, 3)")
    n_sections, n_radial = points.shape[0], points.shape[1]
    if n_sections < 2 or n_radial < 3:
        raise ArgumentError("A vessel mesh needs S >= 2 sections and P >= 3 directions, got S={}, P={}"
                            .format(n_sections, n_radial))
    caps = torch.as_tensor(centers_first_last, dtype=DTYPE).reshape(2, 3)
    vertices = torch.cat([points.reshape(-1, 3), caps], dim=0)

    n = np.arange(n_sections - 1)[:, None]
    k = np.arange(n_radial)[None, :]
    here = n * n_radial + k
    ahead = (n + 1) * n_radial + k
    here_next = n * n_radial + (k + 1) % n_radial
    ahead_next = (n + 1) * n_radial + (k + 1) % n_radial
    side = np.concatenate([
        np.stack([here, ahead_next, ahead], axis=-1).reshape(-1, 3),
        np.stack([here, here_next, ahead_next], axis=-1).reshape(-1, 3),
    ])

    first, last = n_sections * n_radial, n_sections * n_radial + 1
    ring = np.arange(n_radial)
    ring_next = (ring + 1) % n_radial
    tail = (n_sections - 1) * n_radial
    start_cap = np.stack([np.full(n_radial, first), ring_next, ring], axis=1)
    end_cap = np.stack([np.full(n_radial, last), tail + ring, tail + ring_next], axis=1)
    return TriangleMesh(vertices, np.concatenate([side, start_cap, end_cap]))


def validate_watertight(mesh):
    """Check that every edge is shared by exactly two faces with opposite orientation.

    Returns:
        (bool, list): watertightness and one diagnostic string per offending edge
    """
    faces = mesh.faces
    directed = Counter()
    for a, b, c in faces:
        for edge in ((a, b), (b, c), (c, a)):
            directed[(int(edge[0]), int(edge[1]))] += 1

    diagnostics = []
    seen = set()
    for (a, b) in sorted(directed):
        key = (min(a, b), max(a, b))
        if key in seen:
            continue
        seen.add(key)
        forward, backward = directed.get((a, b), 0), directed.get((b, a), 0)
        if forward + backward != 2:
            diagnostics.append("edge {}-{}: {} incident face(s)".format(key[0], key[1], forward + backward))
        elif forward != 1:
            diagnostics.append("edge {}-{}: inconsistent orientation".format(key[0], key[1]))
    return len(diagnostics) == 0, diagnostics


def _face_geometry(mesh):
    tri = mesh.triangles()
    edges = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 1], tri[:, 0] - tri[:, 2]], axis=1)
    lengths = np.linalg.norm(edges, axis=2)
    area = 0.5 * np.linalg.norm(np.cross(edges[:, 0], -edges[:, 2]), axis=1)
    return edges, lengths, area


def mesh_quality(mesh):
    """Minimum interior angle (degrees), maximum aspect ratio and element counts.

    The aspect ratio of a face is longest_edge * perimeter / (4 sqrt(3) area), 1 for an
    equilateral triangle.
    """
    edges, lengths, area = _face_geometry(mesh)
    scale = np.maximum(lengths.max(axis=1), 1e-300)
    degenerate = area <= 1e-12 * scale ** 2
    if degenerate.any():
        raise DegenerateGeometryError("Face {} has zero area".format(int(np.nonzero(degenerate)[0][0])))

    angles = []
    for corner in range(3):
        u = -edges[:, (corner + 2) % 3]
        v = edges[:, corner]
        cos = np.einsum('ij,ij->i', u, v) / (lengths[:, (corner + 2) % 3] * lengths[:, corner])
        angles.append(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
    aspect = lengths.max(axis=1) * lengths.sum(axis=1) / (4.0 * math.sqrt(3.0) * area)
    return {
        'min_angle_deg': float(np.min(angles)),
        'max_aspect_ratio': float(aspect.max()),
        'n_vertices': int(mesh.n_vertices),
        'n_faces': int(mesh.n_faces),
    }
