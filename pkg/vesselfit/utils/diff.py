"""Reverse-mode gradients of scalar losses w.r.t. all control points, and a finite-difference checker"""
import numpy as np
import torch

from vesselfit.utils.constants import (DEFAULT_FD_STEP, FD_ABS_TOL, FD_PASS_FRACTION, FD_REL_TOL, PARAM_GROUPS)
from vesselfit.utils.error import ArgumentError, NumericError
from vesselfit.utils.logger import log
from vesselfit.utils.model import to_tensors


class ParamGradient(object):
    """Gradient with the same layout as the VesselParams it differentiates"""

    def __init__(self, d_centerline, d_radius, d_adjustments):
        self.d_centerline = d_centerline
        self.d_radius = d_radius
        self.d_adjustments = d_adjustments

    def group(self, name):
        return dict(zip(PARAM_GROUPS, (self.d_centerline, self.d_radius, self.d_adjustments)))[name]

    def flatten(self):
        return np.concatenate([self.group(g).ravel() for g in PARAM_GROUPS])


def check_finite(value, stage):
    """Raise NumericError naming `stage` if the tensor holds NaN or Inf"""
    if value is not None and not bool(torch.isfinite(value).all()):
        raise NumericError("Non-finite value in {}".format(stage), stage=stage)


def gradient(params, loss_fn):
    """Evaluate loss_fn(ParamTensors) and differentiate it w.r.t. every control point.

    Returns:
        (float, ParamGradient): the loss value and its gradient
    """
    tensors = to_tensors(params, requires_grad=PARAM_GROUPS)
    loss = loss_fn(tensors)
    if not torch.is_tensor(loss) or loss.numel() != 1:
        raise ArgumentError("Loss function must return a scalar tensor")
    check_finite(loss, 'forward')
    if loss.requires_grad:
        loss.backward()
    grads = []
    for name, tensor in zip(PARAM_GROUPS, tensors):
        grad = tensor.grad if tensor.grad is not None else torch.zeros_like(tensor)
        check_finite(grad, 'backward ({})'.format(name))
        grads.append(grad.detach().numpy().copy())
    return float(loss.detach()), ParamGradient(*grads)


class FiniteDifferenceReport(object):
    """Per-coordinate comparison of analytic and central-difference derivatives.

    Attributes:
        entries: list of dicts with group, index, analytic, numeric and rel_error
        failing: entries outside tolerance that are not flagged
        flagged: entries whose error shrinks at h/4 with a matching sign, i.e. the step
            straddles a switch of the nearest mesh element
    """

    def __init__(self, entries, failing, flagged, h):
        self.entries = entries
        self.failing = failing
        self.flagged = flagged
        self.h = h

    @property
    def n_coordinates(self):
        return len(self.entries)

    @property
    def max_rel_error(self):
        return max([e['rel_error'] for e in self.entries] or [0.0])

    @property
    def pass_fraction(self):
        if not self.entries:
            return 1.0
        return 1.0 - len(self.failing) / float(len(self.entries))

    def passed(self, required=FD_PASS_FRACTION):
        return self.pass_fraction >= required

    def to_dict(self):
        return {
            'h': self.h,
            'n_coordinates': self.n_coordinates,
            'max_rel_error': self.max_rel_error,
            'pass_fraction': self.pass_fraction,
            'n_failing': len(self.failing),
            'n_flagged': len(self.flagged),
            'failing': [dict(e, index=list(e['index'])) for e in self.failing],
        }


def _within(analytic, numeric, rel_tol, abs_tol):
    error = abs(analytic - numeric)
    return error <= abs_tol or error <= rel_tol * max(abs(analytic), abs(numeric))


def _rel_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-300)


def finite_difference_check(params, loss_fn, h=DEFAULT_FD_STEP, rel_tol=FD_REL_TOL, abs_tol=FD_ABS_TOL,
                            groups=None, verbose=False):
    """Compare the autograd gradient against central differences for each coordinate.

    Args:
        params(VesselParams): point of evaluation
        loss_fn: scalar loss of ParamTensors; must be deterministic
        h(float): step of (loss(p + h e) - loss(p - h e)) / 2h
        groups(list, optional): parameter groups to check, default all
    """
    if not h > 0:
        raise ArgumentError("Finite-difference step must be positive, got {}".format(h))
    groups = PARAM_GROUPS if groups is None else list(groups)
    _, grad = gradient(params, loss_fn)

    def central(name, index, step):
        values = []
        for sign in (1.0, -1.0):
            shifted = params.copy()
            shifted.group(name)[index] += sign * step
            with torch.no_grad():
                values.append(float(loss_fn(to_tensors(shifted))))
        return (values[0] - values[1]) / (2.0 * step)

    entries, failing, flagged = [], [], []
    for name in groups:
        analytic_group = grad.group(name)
        for index in np.ndindex(*analytic_group.shape):
            analytic = float(analytic_group[index])
            numeric = central(name, index, h)
            entry = {'group': name, 'index': tuple(int(i) for i in index), 'analytic': analytic,
                     'numeric': numeric, 'rel_error': _rel_error(analytic, numeric)}
            entries.append(entry)
            if _within(analytic, numeric, rel_tol, abs_tol):
                continue
            refined = central(name, index, h / 4.0)
            if abs(refined - analytic) < abs(numeric - analytic) and np.sign(refined) == np.sign(analytic):
                flagged.append(entry)
            else:
                failing.append(entry)
        if verbose:
            log("Checked {} {} coordinates".format(analytic_group.size, name))

    report = FiniteDifferenceReport(entries, failing, flagged, h)
    if verbose:
        log("Finite differences: {:.2%} within tolerance, {} flagged, max rel error {:.3g}".format(
            report.pass_fraction, len(flagged), report.max_rel_error))
    return report
