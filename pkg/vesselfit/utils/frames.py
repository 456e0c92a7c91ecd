"""Centerline tangents, propagated generating vectors and cross-section surface points"""
import math

import torch

from vesselfit.utils.bspline import DTYPE
from vesselfit.utils.constants import (DEGENERACY_EPS, FALLBACK_SEED_VECTOR, MIN_RADIUS, SEED_PARALLEL_EPS,
                                       SEED_VECTOR)
from vesselfit.utils.error import ArgumentError, DegenerateGeometryError


class CrossSectionSet(object):
    """S cross-sections: centers, unit tangents, generating vectors, radii and adjustments.

    Args:
        centers: (S, 3) tensor of centerline points (voxel units)
        tangents, v_i, v_j: (S, 3) tensors of unit vectors
        radii: (S,) tensor
        adjustments: (S, P) tensor of per-direction radial offsets
    """

    def __init__(self, centers, tangents, v_i, v_j, radii, adjustments):
        self.centers = centers
        self.tangents = tangents
        self.v_i = v_i
        self.v_j = v_j
        self.radii = radii
        self.adjustments = adjustments

    def __len__(self):
        return self.centers.shape[0]

    @property
    def n_radial(self):
        return self.adjustments.shape[1]


def _normalize(vector):
    return vector / torch.linalg.norm(vector)


def tangents(centers):
    """Forward-difference unit tangents t_n = normalize(c[n+1] - c[n]); the last one is replicated"""
    centers = torch.as_tensor(centers, dtype=DTYPE)
    if centers.shape[0] < 2:
        raise ArgumentError("Tangents need at least 2 centerline points")
    diffs = centers[1:] - centers[:-1]
    lengths = torch.linalg.norm(diffs, dim=1)
    if bool((lengths <= DEGENERACY_EPS).any()):
        index = int(torch.nonzero(lengths <= DEGENERACY_EPS)[0, 0])
        raise DegenerateGeometryError("Centerline points {} and {} coincide".format(index, index + 1))
    unit = diffs / lengths[:, None]
    return torch.cat([unit, unit[-1:]], dim=0)


def propagate_frames(tangents):
    """Propagate the generating vector pair (v_i, v_j) along the tangents.

    The first v_i is normalize((0, 0, 1) x t_0), seeded with (0, 1, 0) instead when t_0 is
    parallel to the z axis. Each following v_i takes the cross product with the new tangent
    twice, normalize(t_n x (v_i[n-1] x t_n)), which carries the previous vector into the new
    cross-section plane. v_j = normalize(t_n x v_i).
    """
    tangents = torch.as_tensor(tangents, dtype=DTYPE)
    seed = torch.tensor(SEED_VECTOR, dtype=DTYPE)
    first = torch.linalg.cross(seed, tangents[0])
    if float(torch.linalg.norm(first.detach())) < SEED_PARALLEL_EPS:
        seed = torch.tensor(FALLBACK_SEED_VECTOR, dtype=DTYPE)
        first = torch.linalg.cross(seed, tangents[0])

    v_i = [_normalize(first)]
    for n in range(1, tangents.shape[0]):
        t_n = tangents[n]
        crossed = torch.linalg.cross(v_i[-1], t_n)
        if float(torch.linalg.norm(crossed.detach())) < DEGENERACY_EPS:
            raise DegenerateGeometryError("Frame degenerates at cross-section {}: tangent flipped parallel "
                                          "to the generating vector".format(n))
        v_i.append(_normalize(torch.linalg.cross(t_n, crossed)))
    v_i = torch.stack(v_i)
    v_j = torch.linalg.cross(tangents, v_i, dim=1)
    v_j = v_j / torch.linalg.norm(v_j, dim=1, keepdim=True)
    return v_i, v_j


def make_cross_sections(centers, radii, adjustments):
    """Build the CrossSectionSet of sampled centers, radii (S,) and adjustments (S, P)"""
    centers = torch.as_tensor(centers, dtype=DTYPE)
    t = tangents(centers)
    v_i, v_j = propagate_frames(t)
    return CrossSectionSet(centers, t, v_i, v_j,
                           torch.as_tensor(radii, dtype=DTYPE).reshape(-1),
                           torch.as_tensor(adjustments, dtype=DTYPE))


def section_radii(cs):
    """Per-direction radii r[n] + a[n, k], clamped below at MIN_RADIUS (zero gradient when clamped)"""
    return torch.clamp(cs.radii[:, None] + cs.adjustments, min=MIN_RADIUS)


def cross_section_points(cs, n_radial=None):
    """The S x P surface points c + (r + a_k) (cos(2 pi k / P) v_i + sin(2 pi k / P) v_j)"""
    n_radial = cs.n_radial if n_radial is None else n_radial
    if n_radial < 3:
        raise ArgumentError("Cross-sections need P >= 3 radial directions, got {}".format(n_radial))
    if n_radial != cs.n_radial:
        raise ArgumentError("Adjustments have {} directions but P = {}".format(cs.n_radial, n_radial))
    angles = torch.arange(n_radial, dtype=DTYPE) * (2.0 * math.pi / n_radial)
    directions = (torch.cos(angles)[None, :, None] * cs.v_i[:, None, :] +
                  torch.sin(angles)[None, :, None] * cs.v_j[:, None, :])
    return cs.centers[:, None, :] + section_radii(cs)[:, :, None] * directions
