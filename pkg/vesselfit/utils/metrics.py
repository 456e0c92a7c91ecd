"""Evaluation metrics: Dice, Chamfer and 95th-percentile Hausdorff distances"""
import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from vesselfit.utils.error import ArgumentError
from vesselfit.utils.frames import section_radii
from vesselfit.utils.model import cross_sections


class EvalReport(object):
    """Dice, hd95 and chamfer of a result, plus optional radius and mesh-quality fields"""

    def __init__(self, dice, hd95, chamfer, average_radius=None, mesh_quality=None):
        self.dice = float(dice)
        self.hd95 = float(hd95)
        self.chamfer = float(chamfer)
        self.average_radius = None if average_radius is None else float(average_radius)
        self.mesh_quality = dict(mesh_quality or {})
        values = [self.dice, self.hd95, self.chamfer] + list(self.mesh_quality.values())
        if self.average_radius is not None:
            values.append(self.average_radius)
        if not np.isfinite(values).all():
            raise ArgumentError("Evaluation produced non-finite values: {}".format(values))

    def to_dict(self):
        data = {'dice': self.dice, 'hd95': self.hd95, 'chamfer': self.chamfer}
        if self.average_radius is not None:
            data['average_radius'] = self.average_radius
        if self.mesh_quality:
            data['mesh_quality'] = dict(self.mesh_quality)
        return data


def dice_score(a, b):
    """2 |a & b| / (|a| + |b|), 1.0 when both grids are empty"""
    a, b = np.asarray(a).astype(bool), np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise ArgumentError("Grid shapes differ: {} vs {}".format(a.shape, b.shape))
    total = a.sum() + b.sum()
    if total == 0:
        return 1.0
    return 2.0 * np.logical_and(a, b).sum() / float(total)


def _points(pts):
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ArgumentError("Point lists must be non-empty (N, D) arrays")
    return pts


def _directed(pts_a, pts_b):
    a, b = _points(pts_a), _points(pts_b)
    return cKDTree(b).query(a)[0], cKDTree(a).query(b)[0]


def chamfer(pts_a, pts_b):
    """Symmetric mean of the two mean nearest-neighbour distances"""
    a_to_b, b_to_a = _directed(pts_a, pts_b)
    return 0.5 * (a_to_b.mean() + b_to_a.mean())


def hd95(pts_a, pts_b):
    """95th percentile (linear interpolation) of the pooled a->b and b->a nearest-neighbour distances"""
    a_to_b, b_to_a = _directed(pts_a, pts_b)
    return float(np.percentile(np.concatenate([a_to_b, b_to_a]), 95))


def boundary_points(grid):
    """Voxel-center coordinates of the foreground voxels that touch the background"""
    grid = np.asarray(grid).astype(bool)
    boundary = grid & ~ndimage.binary_erosion(grid)
    return np.argwhere(boundary) + 0.5


def average_radius(params, n_samples):
    """Mean cross-section radius (base radius plus mean adjustment) over n_samples sections"""
    return float(section_radii(cross_sections(params, n_samples)).mean())


def evaluate(pred, ref, pred_points=None, ref_points=None, mesh_quality=None):
    """EvalReport of a predicted grid against a reference grid.

    hd95 and chamfer compare the given point lists (e.g. centerlines); without them they
    compare the boundary voxels of the two grids.
    """
    if pred_points is None or ref_points is None:
        pred_points, ref_points = boundary_points(pred), boundary_points(ref)
    return EvalReport(dice_score(pred, ref), hd95(pred_points, ref_points), chamfer(pred_points, ref_points),
                      mesh_quality=mesh_quality)
