"""Four-stage fitting of vessel parameters to a segmentation.

Stage 1 fits the centerline to the preliminary centerline, stage 2 the radius to the
segmentation, stage 3 corrects the centerline against the segmentation and the optional
stage 4 fits the radial adjustments. Each stage trains one parameter group with a fresh
Adam optimizer while the others stay frozen.
"""
import math
import time

import numpy as np
import torch

from vesselfit.utils import records
from vesselfit.utils.config import read_config
from vesselfit.utils.constants import (ADAM_BETAS, ADAM_EPS, DEFAULT_ITERATIONS, DEFAULT_LEARNING_RATES,
                                       DEFAULT_N_C, DEFAULT_N_R, DEFAULT_RADIAL, DEFAULT_S_LOSS,
                                       DEFAULT_S_MESH, DEFAULT_STAGES, DEFAULT_TAU, DIVERGENCE_FACTOR,
                                       DIVERGENCE_FLOOR, LOG_EVERY, PARAM_GROUPS, STAGE_NAMES, STAGE_TRAINABLE, X)
from vesselfit.utils.diff import check_finite
from vesselfit.utils.error import (ArgumentError, ConfigError, DivergenceError, InputError, NumericError,
                                   StageError, VesselError)
from vesselfit.utils.logger import log
from vesselfit.utils.losses import (LossWeights, centerline_loss, curvature_reg, dice_loss, endpoint_loss,
                                    total_loss)
from vesselfit.utils.metrics import EvalReport, average_radius, chamfer, dice_score, hd95
from vesselfit.utils.mesh import mesh_quality
from vesselfit.utils.model import (VesselParams, fit_control_points, from_tensors, sample_centerline, to_tensors,
                                   vessel_mesh)
from vesselfit.utils.sdf import rasterize_exact
from vesselfit.utils.voxelizer import margin_for_tau, next_axis, soft_voxelize

STAGES = (1, 2, 3, 4)


class StageConfig(object):
    """Loss weights, trainable groups, iteration count and learning rate of one stage"""

    def __init__(self, stage_id, weights, trainable, iterations, learning_rate):
        if stage_id not in STAGES:
            raise ArgumentError("Unknown stage {}".format(stage_id))
        unknown = set(trainable) - set(PARAM_GROUPS)
        if unknown:
            raise ArgumentError("Unknown parameter group(s): {}".format(', '.join(sorted(unknown))))
        if int(iterations) != iterations or iterations < 0:
            raise ArgumentError("Iterations must be a non-negative integer, got {}".format(iterations))
        if not learning_rate > 0:
            raise ArgumentError("Learning rate must be positive, got {}".format(learning_rate))
        self.stage_id = stage_id
        self.weights = weights
        self.trainable = tuple(trainable)
        self.iterations = int(iterations)
        self.learning_rate = float(learning_rate)

    @classmethod
    def default(cls, stage_id, iterations=None, learning_rate=None):
        """The schedule's weights and trainable group for `stage_id`"""
        index = stage_id - 1
        return cls(stage_id, LossWeights.for_stage(stage_id), STAGE_TRAINABLE[stage_id],
                   DEFAULT_ITERATIONS[index] if iterations is None else iterations,
                   DEFAULT_LEARNING_RATES[index] if learning_rate is None else learning_rate)

    @property
    def name(self):
        return STAGE_NAMES[self.stage_id]


class FitInputs(object):
    """Supervision for one fit.

    Args:
        segmentation: binary (X, Y, Z) grid
        preliminary_centerline: (K, 3) ordered polyline, K >= 4
        endpoints: (2, 3) vessel endpoints, default the polyline's first and last point
        slice_mask: optional SliceMask restricting the voxel loss to labeled slices
    """

    def __init__(self, segmentation, preliminary_centerline, endpoints=None, slice_mask=None):
        segmentation = np.asarray(segmentation)
        if segmentation.ndim != 3:
            raise InputError("Segmentation must be a 3D grid, got {} dimension(s)".format(segmentation.ndim))
        if not np.isin(segmentation, (0, 1)).all():
            raise InputError("Segmentation must be binary (0/1)")
        polyline = np.asarray(preliminary_centerline, dtype=np.float64)
        if polyline.ndim != 2 or polyline.shape[1] != 3:
            raise InputError("Preliminary centerline must be a list of 3D points")
        if polyline.shape[0] < 4:
            raise InputError("Preliminary centerline needs at least 4 points, got {}".format(polyline.shape[0]))
        if not np.isfinite(polyline).all():
            raise InputError("Preliminary centerline has non-finite coordinates")
        endpoints = polyline[[0, -1]] if endpoints is None else np.asarray(endpoints, dtype=np.float64)
        if endpoints.shape != (2, 3):
            raise InputError("Endpoints must be two 3D points")
        if (endpoints < 0).any() or (endpoints > np.asarray(segmentation.shape)).any():
            raise InputError("Endpoints {} lie outside the grid {}".format(endpoints.tolist(), segmentation.shape))
        if slice_mask is not None:
            try:
                slice_mask.grid_mask(segmentation.shape)
            except ArgumentError as e:
                raise InputError(str(e))
        self.segmentation = segmentation.astype(np.uint8)
        self.preliminary_centerline = polyline
        self.endpoints = endpoints
        self.slice_mask = slice_mask

    @property
    def shape(self):
        return self.segmentation.shape


class FitConfig(object):
    """All fit hyperparameters; keys match the key=value config file"""

    DEFAULTS = {
        'n_c': DEFAULT_N_C,
        'n_r': DEFAULT_N_R,
        'n_a': None,
        'p': DEFAULT_RADIAL,
        's_loss': DEFAULT_S_LOSS,
        's_mesh': DEFAULT_S_MESH,
        'iterations': DEFAULT_ITERATIONS,
        'learning_rates': DEFAULT_LEARNING_RATES,
        'tau': DEFAULT_TAU,
        'margin': None,
        'stages': DEFAULT_STAGES,
        'seed': 0,
        'threads': 1,
        'divergence_factor': DIVERGENCE_FACTOR,
        'log_every': LOG_EVERY,
    }

    def __init__(self, **kwargs):
        unknown = set(kwargs) - set(self.DEFAULTS)
        if unknown:
            raise ConfigError("Unknown config key(s): {}".format(', '.join(sorted(unknown))))
        for key, default in self.DEFAULTS.items():
            setattr(self, key, kwargs.get(key, default))
        if self.n_a is None:
            self.n_a = self.n_r
        self.iterations = tuple(self.iterations)
        self.learning_rates = tuple(float(lr) for lr in self.learning_rates)
        self.stages = tuple(bool(s) for s in self.stages)
        self._validate()

    def _validate(self):
        for key in ('n_c', 'n_r', 'n_a'):
            if not isinstance(getattr(self, key), int) or getattr(self, key) < 4:
                raise ConfigError("{} must be an integer >= 4, got {}".format(key, getattr(self, key)))
        if not isinstance(self.p, int) or self.p < 3:
            raise ConfigError("p must be an integer >= 3, got {}".format(self.p))
        if not isinstance(self.s_loss, int) or self.s_loss < 3:
            raise ConfigError("s_loss must be an integer >= 3, got {}".format(self.s_loss))
        if not isinstance(self.s_mesh, int) or self.s_mesh < 2:
            raise ConfigError("s_mesh must be an integer >= 2, got {}".format(self.s_mesh))
        for key in ('iterations', 'learning_rates', 'stages'):
            if len(getattr(self, key)) != len(STAGES):
                raise ConfigError("{} needs one value per stage ({}), got {}".format(key, len(STAGES),
                                                                                   list(getattr(self, key))))
        if any(not isinstance(n, int) or n < 0 for n in self.iterations):
            raise ConfigError("iterations must be non-negative integers, got {}".format(list(self.iterations)))
        if any(lr <= 0 for lr in self.learning_rates):
            raise ConfigError("learning_rates must be positive, got {}".format(list(self.learning_rates)))
        if not self.tau > 0:
            raise ConfigError("tau must be positive, got {}".format(self.tau))
        if self.margin is not None and (not isinstance(self.margin, int) or self.margin < 0):
            raise ConfigError("margin must be a non-negative integer, got {}".format(self.margin))
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError("threads must be a positive integer, got {}".format(self.threads))
        if not self.divergence_factor > 1:
            raise ConfigError("divergence_factor must exceed 1, got {}".format(self.divergence_factor))

    @classmethod
    def from_file(cls, path, **overrides):
        """Defaults, then the config file, then any non-None keyword override"""
        data = read_config(path)
        data.update((k, v) for k, v in overrides.items() if v is not None)
        return cls(**data)

    def replace(self, **overrides):
        data = self.to_dict()
        data.update((k, v) for k, v in overrides.items() if v is not None)
        return FitConfig(**data)

    def stage_config(self, stage_id):
        return StageConfig.default(stage_id, self.iterations[stage_id - 1], self.learning_rates[stage_id - 1])

    @property
    def voxel_margin(self):
        """The pruning margin, derived from tau unless set explicitly"""
        return margin_for_tau(self.tau) if self.margin is None else self.margin

    def to_dict(self):
        return {key: getattr(self, key) for key in self.DEFAULTS}


def polyline_length(polyline):
    return float(np.linalg.norm(np.diff(np.asarray(polyline, dtype=np.float64), axis=0), axis=1).sum())


def resample_arclength(polyline, n_samples):
    """n_samples points equidistant in arc length along the polyline, endpoints kept"""
    polyline = np.asarray(polyline, dtype=np.float64)
    if n_samples < 2:
        raise ArgumentError("Resampling needs at least 2 points, got {}".format(n_samples))
    steps = np.linalg.norm(np.diff(polyline, axis=0), axis=1)
    keep = np.concatenate([[True], steps > 0])
    polyline, steps = polyline[keep], steps[steps > 0]
    if steps.size == 0:
        raise InputError("Polyline has zero length")
    arclength = np.concatenate([[0.0], np.cumsum(steps)])
    targets = np.linspace(0.0, arclength[-1], int(n_samples))
    resampled = np.stack([np.interp(targets, arclength, polyline[:, d]) for d in range(3)], axis=1)
    resampled[0], resampled[-1] = polyline[0], polyline[-1]
    return resampled


def _foreground_volume(inputs):
    """Foreground voxel count, extrapolated from the labeled slices when the supervision is sparse"""
    mask = inputs.slice_mask
    if mask is None:
        return float(inputs.segmentation.sum())
    labeled = float(inputs.segmentation[mask.grid_mask(inputs.shape)].sum())
    if not mask.slices:
        return 0.0
    span = mask.slices[-1] - mask.slices[0] + 1
    return labeled * span / float(len(mask.slices))


def init_params(inputs, n_c=DEFAULT_N_C, n_r=DEFAULT_N_R, p=DEFAULT_RADIAL, n_a=None, s_loss=DEFAULT_S_LOSS):
    """Starting parameters: least-squares centerline, cylinder-volume radius, zero adjustments.

    The constant radius is sqrt(|V| / (pi L)) for |V| foreground voxels and polyline length L.
    """
    reference = resample_arclength(inputs.preliminary_centerline, max(s_loss, 4 * n_c))
    centerline_cp = fit_control_points(reference, n_c)
    volume = _foreground_volume(inputs)
    if volume <= 0:
        raise InputError("Segmentation has no foreground voxels")
    radius = math.sqrt(volume / (math.pi * polyline_length(inputs.preliminary_centerline)))
    n_a = n_r if n_a is None else n_a
    return VesselParams(centerline_cp, np.full(n_r, radius), np.zeros((n_a, p)))


class FitTargets(object):
    """Tensors every stage compares against, computed once per fit"""

    def __init__(self, inputs, config):
        self.centerline = torch.as_tensor(resample_arclength(inputs.preliminary_centerline, config.s_loss))
        self.endpoints = torch.as_tensor(inputs.endpoints)
        self.segmentation = torch.as_tensor(inputs.segmentation.astype(np.float64))
        self.mask = None if inputs.slice_mask is None else inputs.slice_mask.grid_mask(inputs.shape)


def stage_loss(tensors, inputs, targets, weights, config, axis):
    """Weighted loss of one forward pass; components with zero weight are not computed"""
    components = {}
    if weights.lambda_cl or weights.lambda_e or weights.lambda_reg:
        samples = sample_centerline(tensors, config.s_loss)
        if weights.lambda_cl:
            components['centerline'] = centerline_loss(samples, targets.centerline) / config.s_loss
        if weights.lambda_e:
            components['endpoint'] = endpoint_loss(samples[0], samples[-1], targets.endpoints[0], targets.endpoints[1])
        if weights.lambda_reg:
            components['regularization'] = curvature_reg(samples) / (config.s_loss - 2)
    if weights.lambda_vox:
        mesh = vessel_mesh(tensors, config.s_mesh)
        soft = soft_voxelize(mesh, inputs.shape, tau=config.tau, margin=config.voxel_margin, axis=axis,
                             threads=config.threads, check=False)
        components['voxel'] = dice_loss(soft, targets.segmentation, targets.mask)
    return total_loss(components, weights), components


def run_stage(params, inputs, cfg, opt_state=None, config=None, targets=None, verbose=True):
    """Run `cfg.iterations` Adam steps on the trainable groups of one stage.

    Args:
        params(VesselParams): starting point; never modified
        inputs(FitInputs): supervision
        cfg(StageConfig): weights, trainable groups, iterations, learning rate
        opt_state(dict, optional): {'axis', 'step'} carried between stages
        config(FitConfig, optional): sampling and voxelization settings

    Returns:
        (VesselParams, dict, list): fitted params, updated opt_state and the loss of every
        iteration (measured before its update)
    """
    config = config or FitConfig()
    targets = targets or FitTargets(inputs, config)
    opt_state = dict(opt_state or {'axis': X, 'step': 0})
    if not cfg.trainable or cfg.iterations == 0:
        return params, opt_state, []

    tensors = to_tensors(params, requires_grad=cfg.trainable)
    trainable = [getattr(tensors, group) for group in cfg.trainable]
    optimizer = torch.optim.Adam(trainable, lr=cfg.learning_rate, betas=ADAM_BETAS, eps=ADAM_EPS)
    stage = 'stage {}'.format(cfg.stage_id)
    history = []
    axis = opt_state['axis']
    for iteration in range(cfg.iterations):
        optimizer.zero_grad()
        loss, _ = stage_loss(tensors, inputs, targets, cfg.weights, config, axis)
        check_finite(loss, stage)
        value = float(loss.detach())
        history.append(value)
        if value > config.divergence_factor * history[0] and value - history[0] > DIVERGENCE_FLOOR:
            raise DivergenceError("Loss diverged in {} at iteration {}: {:.6g} (initial {:.6g})"
                                  .format(stage, iteration, value, history[0]), stage=cfg.stage_id)
        loss.backward()
        for tensor in trainable:
            check_finite(tensor.grad, stage + ' gradient')
        optimizer.step()
        axis = next_axis(axis)
        if verbose and config.log_every and (iteration + 1) % config.log_every == 0:
            log("Stage {} [{}/{}] loss {:.6f}".format(cfg.stage_id, iteration + 1, cfg.iterations, value))

    opt_state = {'axis': axis, 'step': opt_state['step'] + cfg.iterations}
    return from_tensors(tensors), opt_state, history


def evaluate_fit(params, inputs, config):
    """EvalReport of fitted params against the full segmentation and preliminary centerline"""
    mesh = vessel_mesh(params, config.s_mesh)
    predicted = rasterize_exact(mesh, inputs.shape, check=False, clip=True)
    samples = sample_centerline(params, config.s_loss).detach().numpy()
    reference = inputs.preliminary_centerline
    return EvalReport(dice=dice_score(predicted, inputs.segmentation), hd95=hd95(samples, reference),
                      chamfer=chamfer(samples, reference), average_radius=average_radius(params, config.s_loss),
                      mesh_quality=mesh_quality(mesh))


def fit_vessel(inputs, config=None, verbose=True):
    """Fit vessel parameters to the inputs with the staged schedule.

    Args:
        inputs(FitInputs): segmentation, preliminary centerline, endpoints and optional mask
        config(FitConfig, optional): hyperparameters, defaults if omitted
        verbose(bool, optional): log stage boundaries and progress

    Returns:
        (VesselParams, dict): fitted params and the fit report (per-stage final losses,
        dice/hd95/chamfer, average radius, mesh quality, wall time)

    Example
        .. code-block::

            params, report = fit_vessel(FitInputs(segmentation, polyline))
    """
    config = config or FitConfig()
    started = time.time()
    records.reset()
    records.log_hyperparams(config.to_dict(), verbose=False)
    torch.manual_seed(config.seed)

    params = init_params(inputs, config.n_c, config.n_r, config.p, config.n_a, config.s_loss)
    targets = FitTargets(inputs, config)
    opt_state = {'axis': X, 'step': 0}
    for stage_id in STAGES:
        cfg = config.stage_config(stage_id)
        if not config.stages[stage_id - 1]:
            if verbose:
                log("Skipping stage {} ({})".format(stage_id, cfg.name), warn=True)
            continue
        if verbose:
            log("Stage {} ({}): {} iterations".format(stage_id, cfg.name, cfg.iterations))
        try:
            params, opt_state, history = run_stage(params, inputs, cfg, opt_state, config, targets, verbose)
        except (DivergenceError, NumericError) as e:
            e.stage = stage_id
            raise
        except VesselError as e:
            raise StageError("Stage {} ({}) failed: {}".format(stage_id, cfg.name, e), stage_id, e)
        records.log_metrics(stage=stage_id, name=cfg.name, iterations=len(history),
                            initial_loss=history[0] if history else None,
                            final_loss=history[-1] if history else None, verbose=False)

    evaluation = evaluate_fit(params, inputs, config)
    report = {
        'stages': [data for _, data in records.get_records('metrics')],
        'wall_time_s': time.time() - started,
    }
    report.update(evaluation.to_dict())
    if inputs.slice_mask is not None:
        report['sparse_fraction'] = inputs.slice_mask.fraction
    if verbose:
        log("Fit done in {:.1f}s: dice {:.4f}, hd95 {:.3f}, chamfer {:.3f}".format(
            report['wall_time_s'], report['dice'], report['hd95'], report['chamfer']), color='green')
    return params, report


def stage_loss_fn(inputs, stage_id, config=None, axis=X):
    """The total loss of a stage as a function of ParamTensors, sliced along a fixed axis"""
    config = config or FitConfig()
    targets = FitTargets(inputs, config)
    weights = LossWeights.for_stage(stage_id)

    def loss_fn(tensors):
        return stage_loss(tensors, inputs, targets, weights, config, axis)[0]
    return loss_fn
