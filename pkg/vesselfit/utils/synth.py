"""Synthetic vessels with known parameters, slice-wise centerline extraction and sparse slice masks"""
import math

import numpy as np
from scipy import ndimage

from vesselfit.utils.constants import DEFAULT_N_C, DEFAULT_N_R, DEFAULT_RADIAL, SYNTH_KINDS, Z
from vesselfit.utils.error import ArgumentError, GenerationError, InputError
from vesselfit.utils.logger import log
from vesselfit.utils.misc import axis_index
from vesselfit.utils.model import VesselParams, fit_control_points, sample_centerline, vessel_mesh
from vesselfit.utils.sdf import exact_sdf, rasterize_exact, voxel_centers

# Ground truth is rendered finer than the fitted model
RENDER_SECTIONS = 128
RENDER_RADIAL = 64
DENSE_SAMPLES = 512
GT_SAMPLES = 256
NOISE_BAND = 0.5
NOISE_PROBABILITY = 0.2
MIN_SHAPE = 32
REFERENCE_SIZE = 64.0


class SliceMask(object):
    """Slices along `axis` that carry valid labels, for sparse supervision.

    Args:
        axis: 'x', 'y' or 'z'
        size: number of slices along the axis
        slices: sorted labeled slice indices
        keep_fraction: the fraction requested when the mask was made, if known
    """

    def __init__(self, axis, size, slices, keep_fraction=None):
        axis_index(axis)
        self.axis = axis
        self.size = int(size)
        self.slices = sorted(int(s) for s in slices)
        self.keep_fraction = keep_fraction
        if self.slices and (self.slices[0] < 0 or self.slices[-1] >= self.size):
            raise ArgumentError("Slice indices must lie in [0, {})".format(self.size))

    @property
    def fraction(self):
        if self.keep_fraction is not None:
            return float(self.keep_fraction)
        return len(self.slices) / float(self.size) if self.size else 0.0

    def grid_mask(self, shape):
        """Boolean grid that is True on the labeled slices"""
        a = axis_index(self.axis)
        if shape[a] != self.size:
            raise ArgumentError("Slice mask covers {} slices but the grid has {} along {}"
                                .format(self.size, shape[a], self.axis))
        mask = np.zeros(shape, dtype=bool)
        where = [slice(None)] * 3
        where[a] = self.slices
        mask[tuple(where)] = True
        return mask

    def __eq__(self, other):
        return (isinstance(other, SliceMask) and (self.axis, self.size, self.slices) ==
                (other.axis, other.size, other.slices))


class SyntheticCase(object):
    """A generated vessel: ground-truth params, segmentation and dense centerline"""

    def __init__(self, kind, true_params, segmentation, centerline_gt, slice_mask=None, seed=0):
        self.kind = kind
        self.true_params = true_params
        self.segmentation = segmentation
        self.centerline_gt = centerline_gt
        self.slice_mask = slice_mask
        self.seed = seed

    @property
    def shape(self):
        return self.segmentation.shape


def _straight(t, n, rng):
    length = 40.0 * n / REFERENCE_SIZE
    centers = np.stack([np.zeros_like(t), np.zeros_like(t), length * (t - 0.5)], axis=1)
    return centers, np.full_like(t, 5.0 * n / REFERENCE_SIZE), None


def _arc(t, n, rng):
    bend = 28.8 * n / REFERENCE_SIZE
    theta = (t - 0.5) * (math.pi / 2.0)
    x = bend * (1.0 - np.cos(theta)) - 0.5 * bend * (1.0 - math.cos(math.pi / 4.0))
    z = bend * np.sin(theta)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    centers = np.stack([x * math.cos(phi), x * math.sin(phi), z], axis=1)
    return centers, np.full_like(t, 4.0 * n / REFERENCE_SIZE), None


def _helix(t, n, rng, varying=True):
    coil, rise = 6.0 * n / REFERENCE_SIZE, 5.0 * n / REFERENCE_SIZE
    span = 0.56 * n
    phase = rng.uniform(0.0, 2.0 * math.pi)
    angle = (t - 0.5) * span / rise
    centers = np.stack([coil * np.cos(angle + phase), coil * np.sin(angle + phase), rise * angle], axis=1)
    base = 3.5 * n / REFERENCE_SIZE
    radius = base * (1.0 + 0.25 * np.sin(2.0 * math.pi * t + phase)) if varying else np.full_like(t, base)
    return centers, radius, None


def _varying_radius(t, n, rng):
    length = 44.0 * n / REFERENCE_SIZE
    phase = rng.uniform(0.0, 2.0 * math.pi)
    centers = np.stack([np.zeros_like(t), np.zeros_like(t), length * (t - 0.5)], axis=1)
    radius = (5.0 + 1.5 * np.sin(3.0 * math.pi * t + phase)) * n / REFERENCE_SIZE
    return centers, radius, None


def _elliptic(t, n, rng):
    centers, radius, _ = _straight(t, n, rng)
    phase = rng.uniform(0.0, math.pi)
    k = np.arange(DEFAULT_RADIAL)
    profile = 2.0 * n / REFERENCE_SIZE * np.cos(2.0 * (2.0 * math.pi * k / DEFAULT_RADIAL - phase))
    return centers, radius, np.tile(profile, (t.shape[0], 1))


GENERATORS = {
    'straight': _straight,
    'arc': _arc,
    'helix': _helix,
    'varying_radius': _varying_radius,
    'elliptic': _elliptic,
}


def true_params_for(kind, shape, seed=0, n_c=DEFAULT_N_C, n_r=DEFAULT_N_R):
    """Ground-truth VesselParams of a synthetic kind centered in the grid"""
    if kind not in GENERATORS:
        raise ArgumentError("Unknown synthetic kind '{}', expected one of {}".format(kind, ', '.join(SYNTH_KINDS)))
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, DENSE_SAMPLES)
    centers, radius, adjustments = GENERATORS[kind](t, float(min(shape)), rng)
    centers = centers + np.asarray(shape, dtype=np.float64) / 2.0
    if adjustments is None:
        adjustments = np.zeros((t.shape[0], DEFAULT_RADIAL))
    return VesselParams(fit_control_points(centers, n_c), fit_control_points(radius, n_r)[:, 0],
                        fit_control_points(adjustments, n_r))


def render_segmentation(params, shape):
    """rasterize_exact of the finely rendered ground-truth mesh"""
    mesh = vessel_mesh(params, RENDER_SECTIONS, RENDER_RADIAL)
    low, high = mesh.bounds()
    if (low < 0).any() or (high > np.asarray(shape)).any():
        raise GenerationError("Synthetic vessel spans {} - {} and leaves the grid {}".format(
            np.round(low, 2).tolist(), np.round(high, 2).tolist(), list(shape)))
    return mesh, rasterize_exact(mesh, shape, check=False)


def add_boundary_noise(segmentation, mesh, rng):
    """Flip voxels with |sdf| < 0.5 with probability 0.2"""
    band = ndimage.binary_dilation(segmentation) & ~ndimage.binary_erosion(segmentation)
    index = np.flatnonzero(band)
    if index.size == 0:
        return segmentation
    centers = voxel_centers(segmentation.shape)[index]
    near = np.abs(exact_sdf(mesh, centers, check=False)) < NOISE_BAND
    flip = index[near & (rng.random(index.size) < NOISE_PROBABILITY)]
    noisy = segmentation.copy().ravel()
    noisy[flip] = 1 - noisy[flip]
    return noisy.reshape(segmentation.shape)


def make_case(kind, shape=(64, 64, 64), seed=0, noise=False, keep_fraction=None, axis=Z, verbose=False):
    """Generate a synthetic vessel case, deterministic for a given seed.

    Args:
        kind(str): one of straight, arc, helix, varying_radius, elliptic
        shape(tuple): grid shape; at least 32 per axis except for straight
        seed(int): seeds orientation/phase choices and the boundary noise
        noise(bool): flip near-boundary voxels to emulate manual annotation
        keep_fraction(float, optional): also attach a sparse slice mask
    """
    shape = tuple(int(n) for n in shape)
    if kind != 'straight' and min(shape) < MIN_SHAPE:
        raise ArgumentError("Synthetic '{}' needs a grid of at least {}^3, got {}".format(kind, MIN_SHAPE, shape))
    params = true_params_for(kind, shape, seed)
    mesh, segmentation = render_segmentation(params, shape)
    if noise:
        segmentation = add_boundary_noise(segmentation, mesh, np.random.default_rng(seed))
    centerline_gt = sample_centerline(params, GT_SAMPLES).detach().numpy()
    mask = sparsify_slices(segmentation, keep_fraction, axis) if keep_fraction is not None else None
    if verbose:
        log("Generated {} case in {}: {} foreground voxels".format(kind, shape, int(segmentation.sum())))
    return SyntheticCase(kind, params, segmentation, centerline_gt, mask, seed)


def _occupied(seg, axis):
    a = axis_index(axis)
    other = tuple(d for d in range(3) if d != a)
    return np.flatnonzero(np.asarray(seg).astype(bool).any(axis=other)), a


def extract_preliminary_centerline(seg, axis=Z):
    """Foreground center of mass (voxel-center coordinates) of every occupied slice along axis"""
    seg = np.asarray(seg).astype(bool)
    occupied, a = _occupied(seg, axis)
    if occupied.size == 0:
        raise InputError("Cannot extract a centerline from an empty segmentation")
    points = []
    for index in occupied:
        where = [slice(None)] * 3
        where[a] = index
        in_plane = np.argwhere(seg[tuple(where)]) + 0.5
        point = np.insert(in_plane.mean(axis=0), a, index + 0.5)
        points.append(point)
    return np.asarray(points)


def sparsify_slices(seg, keep_fraction, axis=Z):
    """Keep every round(1 / keep_fraction)-th slice of the occupied range plus both boundary slices"""
    if not 0 < keep_fraction <= 1:
        raise ArgumentError("keep_fraction must lie in (0, 1], got {}".format(keep_fraction))
    occupied, a = _occupied(seg, axis)
    size = np.asarray(seg).shape[a]
    if occupied.size == 0:
        return SliceMask(axis, size, [], keep_fraction)
    first, last = int(occupied[0]), int(occupied[-1])
    stride = max(1, int(round(1.0 / keep_fraction)))
    kept = set(range(first, last + 1, stride))
    kept.add(last)
    return SliceMask(axis, size, kept, keep_fraction)


GRADCHECK_SHAPES = {'straight': (24, 24, 24), 'arc': (32, 32, 32)}


def gradcheck_fixture(kind='straight', seed=0):
    """A small synthetic case and a start point off its optimum for gradient checks"""
    if kind not in GRADCHECK_SHAPES:
        raise ArgumentError("Unknown gradcheck fixture '{}', expected one of {}".format(
            kind, ', '.join(sorted(GRADCHECK_SHAPES))))
    case = make_case(kind, GRADCHECK_SHAPES[kind], seed)
    start = case.true_params.copy()
    start.radius_cp = start.radius_cp * 0.85
    start.centerline_cp = start.centerline_cp + np.array([0.3, -0.2, 0.0])
    return case, start
