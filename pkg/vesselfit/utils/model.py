"""Vessel parameters and the differentiable params -> cross-sections -> mesh chain"""
from collections import namedtuple

import numpy as np
import torch

from vesselfit.utils.bspline import DTYPE, SplineCurve, basis_matrix, eval_spline
from vesselfit.utils.constants import ADJUSTMENTS, CENTERLINE, DEFAULT_S_MESH, PARAM_GROUPS, RADIUS
from vesselfit.utils.error import ArgumentError
from vesselfit.utils.frames import cross_section_points, make_cross_sections
from vesselfit.utils.mesh import build_vessel_mesh

ParamTensors = namedtuple('ParamTensors', PARAM_GROUPS)

ILL_CONDITIONED = 1e10


class VesselParams(object):
    """All B-spline control points of one vessel, in voxel units.

    Args:
        centerline_cp: (N_c, 3) centerline control points
        radius_cp: (N_r,) radius control points
        adjustment_cp: (N_a, P) radial adjustment control points
    """

    def __init__(self, centerline_cp, radius_cp, adjustment_cp):
        self.centerline_cp = np.array(centerline_cp, dtype=np.float64).reshape(-1, 3)
        self.radius_cp = np.array(radius_cp, dtype=np.float64).reshape(-1)
        self.adjustment_cp = np.array(adjustment_cp, dtype=np.float64)
        if self.adjustment_cp.ndim != 2:
            raise ArgumentError("Adjustment control points must have shape (N_a, P)")
        for name, count in (('centerline', self.n_c), ('radius', self.n_r), ('adjustment', self.n_a)):
            if count < 4:
                raise ArgumentError("Need at least 4 {} control points, got {}".format(name, count))
        if self.n_radial < 3:
            raise ArgumentError("Need P >= 3 radial directions, got {}".format(self.n_radial))
        if not all(np.isfinite(a).all() for a in (self.centerline_cp, self.radius_cp, self.adjustment_cp)):
            raise ArgumentError("Control points must be finite")

    @property
    def n_c(self):
        return self.centerline_cp.shape[0]

    @property
    def n_r(self):
        return self.radius_cp.shape[0]

    @property
    def n_a(self):
        return self.adjustment_cp.shape[0]

    @property
    def n_radial(self):
        return self.adjustment_cp.shape[1]

    def group(self, name):
        return {CENTERLINE: self.centerline_cp, RADIUS: self.radius_cp, ADJUSTMENTS: self.adjustment_cp}[name]

    def copy(self):
        return VesselParams(self.centerline_cp, self.radius_cp, self.adjustment_cp)

    def __eq__(self, other):
        return (isinstance(other, VesselParams) and
                all(np.array_equal(self.group(g), other.group(g)) for g in PARAM_GROUPS))

    def __repr__(self):
        return "VesselParams(N_c={}, N_r={}, N_a={}, P={})".format(self.n_c, self.n_r, self.n_a, self.n_radial)


def to_tensors(params, requires_grad=()):
    """Fresh float64 tensors of the control points; groups in `requires_grad` track gradients"""
    return ParamTensors(*[torch.tensor(params.group(g), dtype=DTYPE, requires_grad=g in requires_grad)
                          for g in PARAM_GROUPS])


def from_tensors(tensors):
    return VesselParams(*[t.detach().numpy().copy() for t in tensors])


def _as_tensors(params):
    return to_tensors(params) if isinstance(params, VesselParams) else params


def sample_centerline(params, n_samples):
    """(S, 3) centerline samples at t_i = i / (S - 1)"""
    tensors = _as_tensors(params)
    return eval_spline(SplineCurve(tensors.centerline), np.linspace(0.0, 1.0, int(n_samples)))


def sample_radius(params, n_samples):
    tensors = _as_tensors(params)
    return eval_spline(SplineCurve(tensors.radius), np.linspace(0.0, 1.0, int(n_samples)))[:, 0]


def resample_adjustments(adjustments, n_radial):
    """Interpolate (S, P) adjustments periodically (linear in angle) onto n_radial directions"""
    adjustments = torch.as_tensor(adjustments, dtype=DTYPE)
    n_in = adjustments.shape[1]
    if n_radial == n_in:
        return adjustments
    position = np.arange(n_radial) * (n_in / float(n_radial))
    lower = np.floor(position).astype(np.int64)
    weight = torch.as_tensor(position - lower, dtype=DTYPE)
    return adjustments[:, lower % n_in] * (1.0 - weight) + adjustments[:, (lower + 1) % n_in] * weight


def cross_sections(params, n_sections, n_radial=None):
    """CrossSectionSet of S equidistant cross-sections; adjustments resampled to n_radial if given"""
    if int(n_sections) != n_sections or n_sections < 2:
        raise ArgumentError("Need S >= 2 cross-sections, got {}".format(n_sections))
    tensors = _as_tensors(params)
    t = np.linspace(0.0, 1.0, int(n_sections))
    centers = eval_spline(SplineCurve(tensors.centerline), t)
    radii = eval_spline(SplineCurve(tensors.radius), t)[:, 0]
    adjustments = eval_spline(SplineCurve(tensors.adjustments), t)
    if n_radial is not None:
        if n_radial < 3:
            raise ArgumentError("Cross-sections need P >= 3 radial directions, got {}".format(n_radial))
        adjustments = resample_adjustments(adjustments, int(n_radial))
    return make_cross_sections(centers, radii, adjustments)


def vessel_mesh(params, n_sections=DEFAULT_S_MESH, n_radial=None):
    """Watertight TriangleMesh of the vessel with S cross-sections of P (or n_radial) points"""
    cs = cross_sections(params, n_sections, n_radial)
    points = cross_section_points(cs)
    return build_vessel_mesh(points, cs.centers[[0, -1]])


def fit_control_points(samples, n_control_points):
    """Least-squares control points of a spline through equidistant samples (S, D).

    The first and last control points are pinned to the first and last samples, which the
    spline interpolates. Ill-conditioned systems fall back to subsampling the samples.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    n_samples = samples.shape[0]
    picks = np.round(np.linspace(0, n_samples - 1, n_control_points)).astype(np.int64)
    if n_samples < n_control_points:
        return samples[picks]
    basis = basis_matrix(n_control_points, np.linspace(0.0, 1.0, n_samples))
    inner = basis[:, 1:-1]
    if np.linalg.cond(inner) > ILL_CONDITIONED:
        return samples[picks]
    rhs = samples - np.outer(basis[:, 0], samples[0]) - np.outer(basis[:, -1], samples[-1])
    solution = np.linalg.lstsq(inner, rhs, rcond=None)[0]
    return np.concatenate([samples[:1], solution, samples[-1:]], axis=0)


def scale_radius(params, factor, index=None):
    """A copy of params with one (or every) radius control point multiplied by factor"""
    if not factor > 0:
        raise ArgumentError("Radius scale factor must be positive, got {}".format(factor))
    scaled = params.copy()
    if index is None:
        scaled.radius_cp = scaled.radius_cp * factor
    else:
        if not -params.n_r <= index < params.n_r:
            raise ArgumentError("Radius control point {} out of range (N_r={})".format(index, params.n_r))
        scaled.radius_cp[index] = scaled.radius_cp[index] * factor
    return scaled
