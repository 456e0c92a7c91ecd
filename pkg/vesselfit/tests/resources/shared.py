import os
from contextlib import contextmanager
from tempfile import TemporaryDirectory

import numpy as np

from vesselfit.utils.mesh import TriangleMesh
from vesselfit.utils.model import VesselParams

# Corner index x + 2y + 4z, wound counter-clockwise seen from outside
BOX_FACES = [
    (0, 2, 3), (0, 3, 1),
    (4, 5, 7), (4, 7, 6),
    (0, 1, 5), (0, 5, 4),
    (2, 6, 7), (2, 7, 3),
    (0, 4, 6), (0, 6, 2),
    (1, 3, 7), (1, 7, 5),
]


@contextmanager
def temp_directory():
    orig_path = os.getcwd()
    try:
        with TemporaryDirectory() as dir:
            os.chdir(dir)
            yield dir
    finally:
        os.chdir(orig_path)


@contextmanager
def fake_records():
    import vesselfit.utils.records
    _d = vesselfit.utils.records._data_blocks
    vesselfit.utils.records._data_blocks = [('metrics', {'stage': 1}),
                                            ('metrics', {'stage': 2}),
                                            ('hyperparams', {'tau': 0.1}),
                                            ('hyperparams', {'margin': 3})]

    try:
        yield
    finally:
        vesselfit.utils.records._data_blocks = _d


def box_mesh(low=(2.0, 2.0, 2.0), high=(6.0, 6.0, 6.0)):
    low, high = np.asarray(low, dtype=np.float64), np.asarray(high, dtype=np.float64)
    corners = [[(high if (i >> d) & 1 else low)[d] for d in range(3)] for i in range(8)]
    return TriangleMesh(np.asarray(corners), BOX_FACES)


def two_boxes_mesh():
    first, second = box_mesh((2, 2, 2), (5, 5, 5)), box_mesh((2, 7, 7), (5, 10, 10))
    vertices = np.concatenate([first.vertices_numpy(), second.vertices_numpy()])
    return TriangleMesh(vertices, np.concatenate([first.faces, second.faces + 8]))


def tube_params(shape=(24, 24, 24), radius=4.0, n_c=6, n_r=4, p=10, jitter=0.0, seed=0):
    """Straight tube along z through the grid center, optionally with random control-point jitter"""
    rng = np.random.default_rng(seed)
    center = np.asarray(shape, dtype=np.float64) / 2.0
    z = np.linspace(-0.3, 0.3, n_c) * shape[2]
    centerline = np.stack([np.full(n_c, center[0]), np.full(n_c, center[1]), center[2] + z], axis=1)
    centerline[1:-1] += jitter * rng.uniform(-1.0, 1.0, size=(n_c - 2, 3))
    radii = radius + 0.5 * jitter * rng.uniform(-1.0, 1.0, size=n_r)
    return VesselParams(centerline, radii, np.zeros((n_r, p)))


def sphere_mesh(center=(12.3, 12.1, 11.8), radius=7.0, n_lon=48, n_lat=24):
    """Latitude-longitude sphere with outward-facing triangles"""
    phi = 2.0 * np.pi * np.arange(n_lon) / n_lon
    theta = np.pi * np.arange(1, n_lat) / n_lat
    rings = np.stack([np.outer(np.sin(theta), np.cos(phi)), np.outer(np.sin(theta), np.sin(phi)),
                      np.outer(np.cos(theta), np.ones(n_lon))], axis=2).reshape(-1, 3)
    vertices = np.concatenate([[[0.0, 0.0, 1.0]], rings, [[0.0, 0.0, -1.0]]]) * radius + np.asarray(center)
    south = vertices.shape[0] - 1

    def ring(k, j):
        return 1 + k * n_lon + j % n_lon

    faces = [[0, ring(0, j), ring(0, j + 1)] for j in range(n_lon)]
    for k in range(n_lat - 2):
        for j in range(n_lon):
            faces.append([ring(k, j), ring(k + 1, j), ring(k + 1, j + 1)])
            faces.append([ring(k, j), ring(k + 1, j + 1), ring(k, j + 1)])
    faces += [[ring(n_lat - 2, j), south, ring(n_lat - 2, j + 1)] for j in range(n_lon)]
    return TriangleMesh(vertices, np.asarray(faces, dtype=np.int64))
