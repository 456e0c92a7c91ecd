"""Slice-wise differentiable soft voxelization of watertight triangle meshes.

Each slice plane through a row of voxel centers is intersected with the mesh; the
crossing points form closed polygons whose even-odd interior gives the occupancy bit and
whose nearest segment gives the in-plane distance d. A voxel's soft value is
sigmoid(+-d / tau). Only voxels within the mesh bounding box plus a margin are computed;
all others are exactly 0 and carry no gradient.
"""
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import torch

from vesselfit.utils.bspline import DTYPE
from vesselfit.utils.constants import AXES, DEFAULT_MARGIN, DEFAULT_TAU, ON_PLANE_EPS, PRUNED_VALUE_BOUND
from vesselfit.utils.error import ArgumentError, SliceError, TopologyError
from vesselfit.utils.mesh import validate_watertight
from vesselfit.utils.misc import axis_index


class SliceIntersection(object):
    """Intersection of a mesh with one axis-aligned plane.

    Args:
        points: (K, 2) tensor of in-plane coordinates, differentiable w.r.t. mesh vertices
        sources: (K, 2) int array, the mesh edge (vertex pair) each point was cut from
        edges: (E, 2) int array of point pairs cut from the same face
        polygons: list of int arrays, closed counter-clockwise point cycles
    """

    def __init__(self, points, sources, edges, polygons, axis, coord):
        self.points = points
        self.sources = sources
        self.edges = edges
        self.polygons = polygons
        self.axis = axis
        self.coord = coord

    @property
    def is_empty(self):
        return self.edges.shape[0] == 0


class SoftVoxelization(object):
    """Soft occupancy grid plus the diagnostics of how it was computed.

    Attributes:
        grid: tensor with the grid shape, values in (0, 1) inside the computed region and
            exactly 0 elsewhere
        bbox: (low, high) integer index bounds of the computed region (high exclusive)
        occupancy, distance, computed: numpy grids of the occupancy bit, the in-plane
            distance (inf where not computed) and the computed-region mask
    """

    def __init__(self, grid, bbox, margin, tau, axis, occupancy, distance, computed):
        self.grid = grid
        self.bbox = bbox
        self.margin = margin
        self.tau = tau
        self.axis = axis
        self.occupancy = occupancy
        self.distance = distance
        self.computed = computed

    @property
    def shape(self):
        return tuple(self.grid.shape)


def plane_axes(axis):
    """Index of the slicing axis and the two in-plane axes (ascending)"""
    a = axis_index(axis)
    return a, [d for d in range(3) if d != a]


def next_axis(axis):
    """Slicing axis of the next forward pass: x -> y -> z -> x"""
    return AXES[(axis_index(axis) + 1) % 3]


def margin_for_tau(tau):
    """Margin (voxels) beyond which sigmoid(-margin / tau) is negligible"""
    if math.isclose(tau, DEFAULT_TAU):
        return DEFAULT_MARGIN
    return int(math.ceil(tau * math.log(1.0 / PRUNED_VALUE_BOUND)))


def slice_mesh(mesh, axis, coord, check=True):
    """Intersect the mesh with the plane {axis = coord}.

    Vertices lying on the plane are moved ON_PLANE_EPS along the normal for the intersection
    only, so every crossing comes from an edge whose ends lie strictly on opposite sides.
    """
    if check:
        ok, diagnostics = validate_watertight(mesh)
        if not ok:
            raise TopologyError("Cannot slice a mesh that is not watertight: " + "; ".join(diagnostics[:5]))
    a, in_plane = plane_axes(axis)
    vertices = mesh.vertices
    heights = vertices[:, a] - coord
    on_plane = torch.as_tensor(np.abs(heights.detach().numpy()) == 0.0)
    heights = heights + ON_PLANE_EPS * on_plane.to(DTYPE)
    above = heights.detach().numpy() > 0

    faces = mesh.faces
    side = above[faces]
    crossing = faces[side.any(axis=1) & ~side.all(axis=1)]
    if crossing.shape[0] == 0:
        return SliceIntersection(torch.zeros((0, 2), dtype=DTYPE), np.zeros((0, 2), dtype=np.int64),
                                 np.zeros((0, 2), dtype=np.int64), [], axis, coord)

    pairs = np.stack([crossing[:, [0, 1]], crossing[:, [1, 2]], crossing[:, [2, 0]]], axis=1)
    cut = above[pairs[..., 0]] != above[pairs[..., 1]]
    if not (cut.sum(axis=1) == 2).all():
        raise SliceError("Face crosses the plane {}={} in a degenerate way".format(axis, coord))
    face_edges = np.sort(pairs[cut].reshape(-1, 2, 2), axis=2)
    n_vertices = vertices.shape[0]
    keys = face_edges[..., 0] * n_vertices + face_edges[..., 1]
    unique_keys, inverse = np.unique(keys.ravel(), return_inverse=True)
    sources = np.stack([unique_keys // n_vertices, unique_keys % n_vertices], axis=1)
    edges = inverse.reshape(-1, 2)

    h0, h1 = heights[sources[:, 0]], heights[sources[:, 1]]
    s = (h0 / (h0 - h1))[:, None]
    p0 = vertices[sources[:, 0]][:, in_plane]
    p1 = vertices[sources[:, 1]][:, in_plane]
    points = p0 + s * (p1 - p0)
    if not bool(torch.isfinite(points).all()):
        raise SliceError("Non-finite intersection point on plane {}={}".format(axis, coord))

    polygons = extract_polygons(points, edges)
    return SliceIntersection(points, sources, edges, polygons, axis, coord)


def _signed_area(coords):
    x, y = coords[:, 0], coords[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def extract_polygons(points, edges):
    """Partition a degree-2 point graph into its cycles, each wound counter-clockwise"""
    coords = points.detach().numpy() if torch.is_tensor(points) else np.asarray(points, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    n_points = coords.shape[0]
    if n_points == 0:
        return []
    degree = np.bincount(edges.ravel(), minlength=n_points)
    if (degree != 2).any():
        bad = int(np.nonzero(degree != 2)[0][0])
        raise SliceError("Slice point {} has degree {} (expected 2): mesh not watertight or plane degenerate"
                         .format(bad, int(degree[bad])))

    neighbors = [[] for _ in range(n_points)]
    for a, b in edges:
        neighbors[a].append(b)
        neighbors[b].append(a)

    visited = np.zeros(n_points, dtype=bool)
    polygons = []
    for start in range(n_points):
        if visited[start]:
            continue
        cycle = [start]
        visited[start] = True
        previous, current = start, neighbors[start][0]
        while current != start:
            if visited[current] or len(cycle) > n_points:
                raise SliceError("Slice graph is not a union of disjoint cycles")
            cycle.append(current)
            visited[current] = True
            first, second = neighbors[current]
            previous, current = current, (second if first == previous else first)
        cycle = np.asarray(cycle, dtype=np.int64)
        if _signed_area(coords[cycle]) < 0:
            cycle = cycle[::-1].copy()
        polygons.append(cycle)
    return polygons


def _even_odd(centers, a, b):
    """Crossing-number occupancy of centers (N, 2) against segments a -> b (E, 2)"""
    qu, qv = centers[:, None, 0], centers[:, None, 1]
    au, av, bu, bv = a[None, :, 0], a[None, :, 1], b[None, :, 0], b[None, :, 1]
    straddles = (av > qv) != (bv > qv)
    dv = np.where(bv != av, bv - av, 1.0)
    crosses = straddles & (qu < au + (bu - au) * (qv - av) / dv)
    return crosses.sum(axis=1) % 2 == 1


def _segment_distance(q, a, b):
    ab = b - a
    t = ((q - a) * ab).sum(dim=-1) / (ab * ab).sum(dim=-1).clamp_min(1e-300)
    closest = a + t.clamp(0.0, 1.0)[..., None] * ab
    return torch.sqrt(((q - closest) ** 2).sum(dim=-1).clamp_min(1e-20))


def rasterize_slice(si, bbox2d, margin=0, limits=None):
    """Occupancy bit and in-plane distance for the voxel centers of one slice.

    Args:
        si: SliceIntersection
        bbox2d: ((u_lo, u_hi), (v_lo, v_hi)) in-plane voxel index bounds (high exclusive)
        margin: voxels added on every side of bbox2d
        limits: (n_u, n_v) grid size used to clip the region

    Returns:
        occupancy (bool array), distance (tensor, inf where the slice is empty) and the
        clipped region ((u_lo, u_hi), (v_lo, v_hi))
    """
    region = []
    for d, (lo, hi) in enumerate(bbox2d):
        lo, hi = int(lo) - int(margin), int(hi) + int(margin)
        if limits is not None:
            lo, hi = max(0, lo), min(int(limits[d]), hi)
        region.append((lo, max(lo, hi)))
    (u0, u1), (v0, v1) = region
    uu, vv = np.meshgrid(np.arange(u0, u1) + 0.5, np.arange(v0, v1) + 0.5, indexing='ij')
    centers = np.stack([uu.ravel(), vv.ravel()], axis=1)
    size = (u1 - u0, v1 - v0)

    if si.is_empty or centers.shape[0] == 0:
        return (np.zeros(size, dtype=bool),
                torch.full(size, float('inf'), dtype=DTYPE), region)

    a_np = si.points.detach().numpy()[si.edges[:, 0]]
    b_np = si.points.detach().numpy()[si.edges[:, 1]]
    occupancy = _even_odd(centers, a_np, b_np)

    q = torch.as_tensor(centers, dtype=DTYPE)
    with torch.no_grad():
        nearest = _segment_distance(q[:, None, :], torch.as_tensor(a_np)[None], torch.as_tensor(b_np)[None])
        nearest = nearest.argmin(dim=1).numpy()
    # Gradient only flows through the selected segment of every voxel
    chosen = si.edges[nearest]
    distance = _segment_distance(q, si.points[chosen[:, 0]], si.points[chosen[:, 1]])
    return occupancy.reshape(size), distance.reshape(size), region


def soft_voxelize(mesh, shape, tau=DEFAULT_TAU, margin=None, axis='x', threads=1, check=True):
    """Soft voxelization sigmoid(s * d / tau) of a watertight mesh, sliced along `axis`.

    Args:
        mesh: TriangleMesh
        shape: grid shape (X, Y, Z)
        tau: sigmoid temperature (> 0)
        margin: voxels computed around the mesh bounding box, default margin_for_tau(tau)
        axis: slicing axis 'x', 'y' or 'z'
        threads: slices are processed by this many worker threads; results are always
            written back in slice order
    """
    if not tau > 0:
        raise ArgumentError("tau must be positive, got {}".format(tau))
    margin = margin_for_tau(tau) if margin is None else int(margin)
    if margin < 0:
        raise ArgumentError("margin must be non-negative, got {}".format(margin))
    if check:
        ok, diagnostics = validate_watertight(mesh)
        if not ok:
            raise TopologyError("Cannot voxelize a mesh that is not watertight: " + "; ".join(diagnostics[:5]))

    shape = tuple(int(n) for n in shape)
    a, in_plane = plane_axes(axis)
    low, high = mesh.bounds()
    lo = np.array([max(0, int(math.floor(low[d])) - margin) for d in range(3)])
    hi = np.array([min(shape[d], int(math.ceil(high[d])) + margin) for d in range(3)])

    grid = torch.zeros(shape, dtype=DTYPE)
    occupancy = np.zeros(shape, dtype=bool)
    distance = np.full(shape, np.inf)
    computed = np.zeros(shape, dtype=bool)
    result = SoftVoxelization(grid, (lo, hi), margin, tau, axis, occupancy, distance, computed)
    if (hi <= lo).any():
        return result

    bbox2d = [(lo[d], hi[d]) for d in in_plane]
    limits = [shape[d] for d in in_plane]

    def process(index):
        si = slice_mesh(mesh, axis, index + 0.5, check=False)
        occ, dist, region = rasterize_slice(si, bbox2d, 0, limits)
        sign = torch.as_tensor(np.where(occ, 1.0, -1.0), dtype=DTYPE)
        return occ, dist, region, torch.sigmoid(sign * dist / tau)

    indices = range(int(lo[a]), int(hi[a]))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            slices = list(pool.map(process, indices))
    else:
        slices = [process(index) for index in indices]

    for index, (occ, dist, region, values) in zip(indices, slices):
        where = [slice(None)] * 3
        where[a] = index
        where[in_plane[0]] = slice(*region[0])
        where[in_plane[1]] = slice(*region[1])
        where = tuple(where)
        grid[where] = values
        occupancy[where] = occ
        distance[where] = dist.detach().numpy()
        computed[where] = True
    return result


def hard_voxelize(mesh, shape, tau=DEFAULT_TAU, margin=None, axis='x', threads=1):
    """Soft voxelization thresholded at 0.5, as a uint8 grid"""
    soft = soft_voxelize(mesh, shape, tau=tau, margin=margin, axis=axis, threads=threads)
    return (soft.grid.detach().numpy() >= 0.5).astype(np.uint8)
