"""Exact (non-differentiable) signed distance to a watertight triangle mesh.

Positive inside, negative outside. The sign comes from ray-crossing parity along +x,
the magnitude from the exact point-to-triangle distance.
"""
import numpy as np
from scipy.spatial import cKDTree

from vesselfit.utils.constants import RAY_EPS, RAY_RETRIES
from vesselfit.utils.error import BoundsError, DegenerateGeometryError, TopologyError
from vesselfit.utils.mesh import validate_watertight

CHUNK = 1 << 21


def _check_triangles(tris):
    area2 = np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=-1)
    scale = np.maximum(np.ptp(tris, axis=1).max(axis=-1), 1e-300)
    degenerate = area2 <= 1e-14 * scale ** 2
    if degenerate.any():
        raise DegenerateGeometryError("Triangle {} is degenerate".format(int(np.nonzero(degenerate)[0][0])))


def _segment_distance(p, a, b):
    ab = b - a
    t = np.einsum('...i,...i->...', p - a, ab) / np.maximum(np.einsum('...i,...i->...', ab, ab), 1e-300)
    closest = a + np.clip(t, 0.0, 1.0)[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1)


def _distances(points, tris):
    """(N, T) exact distances between points and (non-degenerate) triangles"""
    p = points[:, None, :]
    a, b, c = tris[None, :, 0], tris[None, :, 1], tris[None, :, 2]
    normal = np.cross(b - a, c - a)
    normal = normal / np.linalg.norm(normal, axis=-1, keepdims=True)
    height = np.einsum('...i,...i->...', p - a, normal)
    q = p - height[..., None] * normal
    inside = ((np.einsum('...i,...i->...', np.cross(b - a, q - a), normal) >= 0) &
              (np.einsum('...i,...i->...', np.cross(c - b, q - b), normal) >= 0) &
              (np.einsum('...i,...i->...', np.cross(a - c, q - c), normal) >= 0))
    to_edges = np.minimum(np.minimum(_segment_distance(p, a, b), _segment_distance(p, b, c)),
                          _segment_distance(p, c, a))
    return np.where(inside, np.abs(height), to_edges)


def point_triangle_distance(p, tri):
    """Exact Euclidean distance from point p to the closed triangle tri (3 x 3)"""
    tri = np.asarray(tri, dtype=np.float64).reshape(1, 3, 3)
    _check_triangles(tri)
    return float(_distances(np.asarray(p, dtype=np.float64).reshape(1, 3), tri)[0, 0])


def unsigned_distance(mesh, points, brute_force=False):
    """Minimum point-to-triangle distance for every point (N, 3).

    The accelerated path only visits triangles whose bounding sphere can beat the distance
    to the nearest mesh vertex; it returns the same values as the brute-force path.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    tris = mesh.triangles()
    _check_triangles(tris)
    result = np.empty(points.shape[0])
    if brute_force:
        step = max(1, CHUNK // max(1, tris.shape[0]))
        for start in range(0, points.shape[0], step):
            result[start:start + step] = _distances(points[start:start + step], tris).min(axis=1)
        return result

    centroids = tris.mean(axis=1)
    radii = np.linalg.norm(tris - centroids[:, None, :], axis=-1).max(axis=1)
    upper, _ = cKDTree(mesh.vertices_numpy()).query(points)
    candidates = cKDTree(centroids).query_ball_point(points, upper + radii.max())
    for i, index in enumerate(candidates):
        index = np.asarray(index, dtype=np.int64)
        index = index[np.linalg.norm(centroids[index] - points[i], axis=1) - radii[index] <= upper[i]]
        result[i] = _distances(points[i:i + 1], tris[index]).min() if index.size else upper[i]
    return result


def _ray_hits(origins, tris):
    """Crossings of +x rays from origins (R, 3) with triangles (T, 3, 3).

    Returns (hit mask (R, T), hit x coordinate (R, T), grazing rows (R,)).
    """
    y, z = origins[:, None, 1], origins[:, None, 2]
    ay, az = tris[None, :, 0, 1], tris[None, :, 0, 2]
    by, bz = tris[None, :, 1, 1], tris[None, :, 1, 2]
    cy, cz = tris[None, :, 2, 1], tris[None, :, 2, 2]
    w_a = (by - y) * (cz - z) - (bz - z) * (cy - y)
    w_b = (cy - y) * (az - z) - (cz - z) * (ay - y)
    w_c = (ay - y) * (bz - z) - (az - z) * (by - y)
    total = w_a + w_b + w_c
    proper = np.abs(total) > 1e-14
    inside = proper & (((w_a >= 0) & (w_b >= 0) & (w_c >= 0)) | ((w_a <= 0) & (w_b <= 0) & (w_c <= 0)))
    tol = 1e-12 * np.maximum(np.abs(total), 1.0)
    grazing = inside & ((np.abs(w_a) <= tol) | (np.abs(w_b) <= tol) | (np.abs(w_c) <= tol))
    safe = np.where(proper, total, 1.0)
    x = (w_a * tris[None, :, 0, 0] + w_b * tris[None, :, 1, 0] + w_c * tris[None, :, 2, 0]) / safe
    return inside, x, grazing.any(axis=1)


def _perturbation(attempt):
    angle = 2.399963229728653 * attempt
    return RAY_EPS * attempt * np.array([0.0, np.cos(angle), np.sin(angle)])


def _row_crossings(origins, tris):
    """Sorted crossing x coordinates of each +x ray; grazing rays are nudged and recast"""
    origins = np.array(origins, dtype=np.float64)
    crossings = [None] * origins.shape[0]
    pending = np.arange(origins.shape[0])
    for attempt in range(RAY_RETRIES + 1):
        if pending.size == 0:
            break
        shifted = origins[pending] + _perturbation(attempt)
        step = max(1, CHUNK // max(1, tris.shape[0]))
        retry = []
        for start in range(0, pending.size, step):
            rows = pending[start:start + step]
            inside, x, grazing = _ray_hits(shifted[start:start + step], tris)
            for r, row in enumerate(rows):
                if grazing[r] and attempt < RAY_RETRIES:
                    retry.append(row)
                else:
                    crossings[row] = np.sort(x[r][inside[r]])
        pending = np.asarray(retry, dtype=np.int64)
    return crossings


def inside_mask(mesh, points):
    """True for points strictly inside the mesh (odd number of crossings ahead along +x)"""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    crossings = _row_crossings(points, mesh.triangles())
    return np.array([np.count_nonzero(xs > p[0]) % 2 == 1 for xs, p in zip(crossings, points)], dtype=bool)


def _check_watertight(mesh):
    ok, diagnostics = validate_watertight(mesh)
    if not ok:
        raise TopologyError("Mesh is not watertight: " + "; ".join(diagnostics[:5]))


def exact_sdf(mesh, points, brute_force=False, check=True):
    """Signed distance of points (N, 3) or a single point to the mesh, positive inside"""
    if check:
        _check_watertight(mesh)
    single = np.ndim(points) == 1
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    distance = unsigned_distance(mesh, points, brute_force=brute_force)
    sdf = np.where(inside_mask(mesh, points), distance, -distance)
    return float(sdf[0]) if single else sdf


def voxel_centers(shape):
    """(X*Y*Z, 3) voxel centers (i + 0.5, j + 0.5, k + 0.5) in C order"""
    grids = np.meshgrid(*[np.arange(n) + 0.5 for n in shape], indexing='ij')
    return np.stack([g.ravel() for g in grids], axis=1)


def check_in_grid(mesh, shape):
    low, high = mesh.bounds()
    if (low < 0).any() or (high > np.asarray(shape)).any():
        raise BoundsError("Mesh bounds {} - {} exceed the grid {}".format(
            np.round(low, 3).tolist(), np.round(high, 3).tolist(), list(shape)))


def rasterize_exact(mesh, shape, check=True, clip=False):
    """Binary uint8 grid: 1 where the voxel center lies strictly inside the mesh.

    Rows of voxel centers along x share one ray, so every row is cast once. With clip=True
    a mesh reaching outside the grid is rasterized on the part that overlaps it instead of
    raising BoundsError.
    """
    if check:
        _check_watertight(mesh)
    shape = tuple(int(n) for n in shape)
    if not clip:
        check_in_grid(mesh, shape)
    tris = mesh.triangles()
    _check_triangles(tris)
    grid = np.zeros(shape, dtype=np.uint8)

    low, high = mesh.bounds()
    j = np.arange(max(0, int(np.floor(low[1]))), min(shape[1], int(np.ceil(high[1]))))
    k = np.arange(max(0, int(np.floor(low[2]))), min(shape[2], int(np.ceil(high[2]))))
    if j.size == 0 or k.size == 0:
        return grid
    jj, kk = np.meshgrid(j, k, indexing='ij')
    jj, kk = jj.ravel(), kk.ravel()
    origins = np.stack([np.full(jj.shape, -1.0), jj + 0.5, kk + 0.5], axis=1)
    centers_x = np.arange(shape[0]) + 0.5
    for row, xs in enumerate(_row_crossings(origins, tris)):
        if xs.size:
            ahead = xs.size - np.searchsorted(xs, centers_x, side='right')
            grid[:, jj[row], kk[row]] = (ahead % 2 == 1)
    return grid
