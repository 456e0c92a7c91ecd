"""Clamped uniform cubic B-splines: matrix-form evaluation, de Boor oracle, sampling"""
import numpy as np
import torch

from vesselfit.utils.error import ArgumentError, DomainError

DTYPE = torch.float64

# Uniform cubic B-spline segment matrix, rows multiply [u^3, u^2, u, 1]
SEGMENT_MATRIX = torch.tensor([[-1.0, 3.0, -3.0, 1.0],
                               [3.0, -6.0, 3.0, 0.0],
                               [-3.0, 0.0, 3.0, 0.0],
                               [1.0, 4.0, 1.0, 0.0]], dtype=DTYPE) / 6.0


class SplineCurve(object):
    """A cubic B-spline with M >= 4 D-dimensional control points.

    The first and last control points are tripled before segment evaluation, so the
    curve interpolates both and has M + 1 segments over the parameter interval [0, 1].
    Control points may be a tensor that requires grad; evaluation keeps the graph.
    """

    def __init__(self, control_points):
        cp = torch.as_tensor(control_points, dtype=DTYPE)
        if cp.dim() == 1:
            cp = cp[:, None]
        if cp.dim() != 2:
            raise ArgumentError("Control points must be a list of D-dimensional points")
        if cp.shape[0] < 4:
            raise ArgumentError("A cubic B-spline needs at least 4 control points, got {}".format(cp.shape[0]))
        self.control_points = cp

    @property
    def n_control_points(self):
        return self.control_points.shape[0]

    @property
    def dim(self):
        return self.control_points.shape[1]

    @property
    def n_segments(self):
        return self.n_control_points + 1

    def __call__(self, t):
        return eval_spline(self, t)


class SampledCurve(object):
    """S samples of a curve at strictly increasing, equidistant parameter values"""

    def __init__(self, samples, params):
        self.samples = samples
        self.params = np.asarray(params, dtype=np.float64)

    def __len__(self):
        return self.samples.shape[0]


def _as_curve(curve):
    return curve if isinstance(curve, SplineCurve) else SplineCurve(curve)


def _check_domain(t):
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if not np.all(np.isfinite(t)) or t.min() < 0.0 or t.max() > 1.0:
        raise DomainError("Spline parameter must lie in [0, 1]")
    return t


def _segment_weights(n_control_points, t):
    """Segment index, extended-control-point indices and basis weights for each t"""
    n_segments = n_control_points + 1
    scaled = t * n_segments
    segment = np.minimum(np.floor(scaled).astype(np.int64), n_segments - 1)
    u = scaled - segment
    powers = np.stack([u ** 3, u ** 2, u, np.ones_like(u)], axis=1)
    weights = powers @ SEGMENT_MATRIX.numpy()
    # Extended point j is control point clip(j - 2): the endpoints appear three times
    index = np.clip(segment[:, None] + np.arange(4)[None, :] - 2, 0, n_control_points - 1)
    return index, weights


def basis_matrix(n_control_points, t):
    """The (len(t), M) matrix B with eval(curve, t) = B @ control_points"""
    t = _check_domain(t)
    index, weights = _segment_weights(n_control_points, t)
    basis = np.zeros((t.shape[0], n_control_points))
    np.add.at(basis, (np.repeat(np.arange(t.shape[0]), 4), index.ravel()), weights.ravel())
    return basis


def eval_spline(curve, t):
    """Evaluate the curve at t (scalar or array) with the segment-matrix formulation.

    Returns a (D,) tensor for scalar t and a (len(t), D) tensor otherwise.
    """
    curve = _as_curve(curve)
    scalar = np.ndim(t) == 0
    t = _check_domain(t)
    index, weights = _segment_weights(curve.n_control_points, t)
    points = curve.control_points[torch.as_tensor(index)]
    value = (torch.as_tensor(weights, dtype=DTYPE)[:, :, None] * points).sum(dim=1)
    return value[0] if scalar else value


def de_boor(curve, t):
    """Evaluate the curve at a scalar t with the de Boor recursion on uniform knots.

    Independent of the matrix form; used as its oracle.
    """
    curve = _as_curve(curve)
    t = float(_check_domain(t)[0])
    cp = curve.control_points.detach().numpy()
    extended = np.concatenate([cp[:1], cp[:1], cp, cp[-1:], cp[-1:]], axis=0)
    n = extended.shape[0]
    degree = 3
    knots = np.arange(n + degree + 1, dtype=np.float64)
    u = degree + t * (n - degree)
    span = min(int(np.floor(u)), n - 1)

    d = [extended[j + span - degree].copy() for j in range(degree + 1)]
    for r in range(1, degree + 1):
        for j in range(degree, r - 1, -1):
            left = knots[j + span - degree]
            alpha = (u - left) / (knots[j + 1 + span - r] - left)
            d[j] = (1.0 - alpha) * d[j - 1] + alpha * d[j]
    return d[degree]


def sample_uniform(curve, n_samples):
    """Sample the curve at t_i = i / (S - 1), i = 0..S-1"""
    if int(n_samples) != n_samples or n_samples < 2:
        raise ArgumentError("Uniform sampling needs S >= 2 samples, got {}".format(n_samples))
    params = np.linspace(0.0, 1.0, int(n_samples))
    return SampledCurve(eval_spline(curve, params), params)


def second_differences(samples):
    """Discrete second differences c[i-1] - 2 c[i] + c[i+1] for i = 1..S-2"""
    if isinstance(samples, SampledCurve):
        samples = samples.samples
    samples = torch.as_tensor(samples, dtype=DTYPE)
    if samples.shape[0] < 3:
        raise ArgumentError("Second differences need S >= 3 samples, got {}".format(samples.shape[0]))
    return samples[:-2] - 2.0 * samples[1:-1] + samples[2:]
