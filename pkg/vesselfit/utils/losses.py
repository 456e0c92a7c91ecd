"""Voxel, centerline, endpoint and curvature losses and their weighted sum"""
import torch

from vesselfit.utils.bspline import DTYPE, second_differences
from vesselfit.utils.constants import CENTERLINE_TOLERANCE, DICE_SMOOTHING, STAGE_WEIGHTS
from vesselfit.utils.error import ArgumentError

COMPONENTS = ['centerline', 'endpoint', 'voxel', 'regularization']


class LossWeights(object):
    """Non-negative weights of the centerline, endpoint, voxel and regularization losses"""

    def __init__(self, lambda_cl=0.0, lambda_e=0.0, lambda_vox=0.0, lambda_reg=0.0):
        self.lambda_cl = float(lambda_cl)
        self.lambda_e = float(lambda_e)
        self.lambda_vox = float(lambda_vox)
        self.lambda_reg = float(lambda_reg)
        values = self.as_tuple()
        if min(values) < 0:
            raise ArgumentError("Loss weights must be non-negative, got {}".format(values))
        if max(values) <= 0:
            raise ArgumentError("At least one loss weight must be positive")

    @classmethod
    def for_stage(cls, stage_id):
        return cls(*STAGE_WEIGHTS[stage_id])

    def as_tuple(self):
        return (self.lambda_cl, self.lambda_e, self.lambda_vox, self.lambda_reg)

    def as_dict(self):
        return dict(zip(COMPONENTS, self.as_tuple()))

    def scaled(self, factor):
        return LossWeights(*[w * factor for w in self.as_tuple()])

    def __eq__(self, other):
        return isinstance(other, LossWeights) and self.as_tuple() == other.as_tuple()

    def __repr__(self):
        return "LossWeights(lambda_cl={}, lambda_e={}, lambda_vox={}, lambda_reg={})".format(*self.as_tuple())


def _tensor(value):
    return torch.as_tensor(value, dtype=DTYPE)


def dice_loss(soft, ref, mask=None):
    """1 - (2 sum(soft * ref) + eps) / (sum(soft) + sum(ref) + eps).

    Args:
        soft: SoftVoxelization or grid tensor
        ref: binary reference grid
        mask: optional boolean grid; sums only run over voxels where it is True
    """
    grid = soft.grid if hasattr(soft, 'grid') else _tensor(soft)
    ref = _tensor(ref)
    if tuple(grid.shape) != tuple(ref.shape):
        raise ArgumentError("Grid shapes differ: {} vs {}".format(tuple(grid.shape), tuple(ref.shape)))
    if mask is not None:
        mask = torch.as_tensor(mask, dtype=torch.bool)
        if tuple(mask.shape) != tuple(ref.shape):
            raise ArgumentError("Mask shape {} does not match the grid {}".format(tuple(mask.shape), tuple(ref.shape)))
        grid, ref = grid[mask], ref[mask]
    overlap = (grid * ref).sum()
    return 1.0 - (2.0 * overlap + DICE_SMOOTHING) / (grid.sum() + ref.sum() + DICE_SMOOTHING)


def centerline_loss(pred, ref, tol=CENTERLINE_TOLERANCE):
    """Sum over index-matched points of max(0, |pred_i - ref_i| - tol)^2"""
    pred, ref = _tensor(pred), _tensor(ref)
    if pred.shape != ref.shape:
        raise ArgumentError("Centerline point counts differ: {} vs {}".format(pred.shape[0], ref.shape[0]))
    distance = torch.sqrt(((pred - ref) ** 2).sum(dim=-1).clamp_min(1e-24))
    return (torch.relu(distance - tol) ** 2).sum()


def endpoint_loss(pred_first, pred_last, ref_first, ref_last):
    return (((_tensor(pred_first) - _tensor(ref_first)) ** 2).sum() +
            ((_tensor(pred_last) - _tensor(ref_last)) ** 2).sum())


def curvature_reg(samples):
    """Sum of squared norms of the discrete second differences"""
    return (second_differences(samples) ** 2).sum()


def total_loss(components, weights):
    """Weighted sum of the loss components.

    Args:
        components(dict): loss values keyed by 'centerline', 'endpoint', 'voxel' and
            'regularization'; components with zero weight may be left out
        weights(LossWeights): the lambdas
    """
    total = _tensor(0.0)
    for name, weight in weights.as_dict().items():
        if weight == 0:
            continue
        if name not in components:
            raise ArgumentError("Missing loss component '{}' (weight {})".format(name, weight))
        total = total + weight * components[name]
    return total
