import functools
import json
import os
import sys

import click
import numpy as np
import torch

from vesselfit._version import __version__
from vesselfit.utils.constants import (DEFAULT_FD_STEP, DEFAULT_RADIAL, DEFAULT_S_MESH, DEFAULT_TAU, EXIT_DIVERGED,
                                       EXIT_INPUT, FD_ABS_TOL, FD_PASS_FRACTION, FD_REL_TOL, SYNTH_KINDS, X, Z)
from vesselfit.utils.diff import finite_difference_check
from vesselfit.utils.error import DivergenceError, InputError, NumericError, StageError, VesselError
from vesselfit.utils.fileio import (read_mesh_obj, read_params_json, read_polyline, read_slice_mask, read_volume,
                                    write_mesh_obj, write_params_json, write_polyline, write_slice_mask,
                                    write_volume)
from vesselfit.utils.fit import FitConfig, FitInputs, fit_vessel, stage_loss_fn
from vesselfit.utils.logger import log
from vesselfit.utils.mesh import mesh_quality
from vesselfit.utils.metrics import evaluate
from vesselfit.utils.misc import parse_shape
from vesselfit.utils.model import vessel_mesh
from vesselfit.utils.synth import GRADCHECK_SHAPES, extract_preliminary_centerline, gradcheck_fixture, make_case
from vesselfit.utils.voxelizer import hard_voxelize, soft_voxelize


def exit_codes(func):
    """Map library errors to exit codes: 2 for divergence or NaN/Inf, 1 for everything else"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (DivergenceError, NumericError) as e:
            log(str(e), error=True)
            sys.exit(EXIT_DIVERGED)
        except StageError as e:
            log(str(e), error=True)
            sys.exit(EXIT_DIVERGED if isinstance(e.cause, (DivergenceError, NumericError)) else EXIT_INPUT)
        except (VesselError, OSError) as e:
            log(str(e), error=True)
            sys.exit(EXIT_INPUT)
    return wrapper


def _write_json(data, path):
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')


def _binary(grid):
    """Soft grids are thresholded at 0.5"""
    return (grid >= 0.5).astype(np.uint8) if grid.dtype.kind == 'f' else grid


class _UsageExit(object):
    """Report click usage errors (missing or malformed options) with exit code 1"""

    def make_context(self, *args, **kwargs):
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as e:
            e.exit_code = EXIT_INPUT
            raise


class VesselCommand(_UsageExit, click.Command):
    pass


class VesselGroup(_UsageExit, click.Group):
    command_class = VesselCommand


@click.group(cls=VesselGroup)
@click.version_option(version=__version__, prog_name="vesselfit")
@click.pass_context
def main(ctx):
    """Fit parametric vessel models to binary segmentations.

    Generate a synthetic case and fit it:

        $ vesselfit synth --kind helix --out-dir case

        $ vesselfit fit --seg case/segmentation.nrrd --centerline case/centerline.txt --out-params fit.json
    """
    pass


@main.command("help")
@click.pass_context
def help(ctx):  # no-cover
    """Print this help message."""

    # Pretend user typed 'vesselfit --help' instead of 'vesselfit help'.
    sys.argv[1] = "--help"
    main()


@main.command('version')
@click.pass_context
def main_version(ctx):  # no-cover
    """Print installed vesselfit library version."""

    # Pretend user typed 'vesselfit --version' instead of 'vesselfit version'
    sys.argv[1] = "--version"
    main()


@main.command("fit", short_help="Fit vessel parameters to a segmentation.")
@click.option('--seg', 'seg', required=True, help="Binary segmentation (NRRD)")
@click.option('--centerline', 'centerline', required=True, help="Preliminary centerline ('x y z' per line)")
@click.option('--config', 'config_path', help="key=value config file")
@click.option('--sparse-mask', 'sparse_mask', help="Slice mask JSON of the labeled slices")
@click.option('--stage4/--no-stage4', 'stage4', default=None, help="Enable the radial adjustment stage")
@click.option('--skip-stage', 'skip_stages', type=click.IntRange(1, 4), multiple=True, help="Disable a stage")
@click.option('--seed', 'seed', type=int, help="Random seed  [default: 0]")
@click.option('--threads', 'threads', type=click.IntRange(1), help="Slice worker threads  [default: 1]")
@click.option('--out-params', 'out_params', required=True, help="Fitted params JSON")
@click.option('--out-mesh', 'out_mesh', help="Fitted mesh (OBJ)")
@click.option('--out-vox', 'out_vox', help="Soft voxelization of the fit (float32 NRRD)")
@click.option('--report', 'report_path', help="Fit report JSON")
@click.option('-q', '--quiet', 'quiet', is_flag=True, default=False, help="Only print errors")
@click.pass_context
@exit_codes
def exec_fit(ctx, seg, centerline, config_path, sparse_mask, stage4, skip_stages, seed, threads, out_params,
             out_mesh, out_vox, report_path, quiet):
    """Fit centerline, radius and (optionally) radial adjustments:

        $ vesselfit fit --seg seg.nrrd --centerline cl.txt --out-params fit.json

    Exit code 0 on success, 1 on invalid input and 2 if the optimization diverged.
    """
    if config_path:
        config = FitConfig.from_file(config_path, seed=seed, threads=threads)
    else:
        config = FitConfig().replace(seed=seed, threads=threads)
    stages = list(config.stages)
    if stage4 is not None:
        stages[3] = stage4
    for stage_id in skip_stages:
        stages[stage_id - 1] = False
    config = config.replace(stages=stages)
    torch.set_num_threads(config.threads)

    mask = read_slice_mask(sparse_mask) if sparse_mask else None
    inputs = FitInputs(read_volume(seg), read_polyline(centerline), slice_mask=mask)
    params, report = fit_vessel(inputs, config, verbose=not quiet)

    write_params_json(params, out_params)
    if out_mesh or out_vox:
        mesh = vessel_mesh(params, config.s_mesh)
        if out_mesh:
            write_mesh_obj(mesh, out_mesh)
        if out_vox:
            soft = soft_voxelize(mesh, inputs.shape, tau=config.tau, margin=config.voxel_margin, threads=config.threads)
            write_volume(soft.grid.detach().numpy().astype(np.float32), out_vox)
    if report_path:
        _write_json(report, report_path)


@main.command("mesh", short_help="Build the OBJ mesh of a params document.")
@click.option('--params', 'params_path', required=True, help="Params JSON")
@click.option('--sections', 'sections', type=click.IntRange(2), default=DEFAULT_S_MESH, show_default=True,
              help="Number of cross-sections S")
@click.option('--radial', 'radial', type=click.IntRange(3), default=DEFAULT_RADIAL, show_default=True,
              help="Radial directions P of the mesh")
@click.option('--out', 'out', required=True, help="Output OBJ")
@click.pass_context
@exit_codes
def exec_mesh(ctx, params_path, sections, radial, out):
    """Build the mesh of (possibly hand-edited) params:

        $ vesselfit mesh --params fit.json --out vessel.obj
    """
    mesh = vessel_mesh(read_params_json(params_path), sections, radial)
    write_mesh_obj(mesh, out)
    log("Wrote {} vertices, {} faces to {}".format(mesh.n_vertices, mesh.n_faces, out))


@main.command("voxelize", short_help="Voxelize params or a mesh into an NRRD volume.")
@click.option('--params', 'params_path', help="Params JSON")
@click.option('--mesh', 'mesh_path', help="Watertight OBJ mesh")
@click.option('--shape', 'shape', required=True, help="Grid shape X,Y,Z")
@click.option('--tau', 'tau', type=float, default=DEFAULT_TAU, show_default=True, help="Sigmoid temperature")
@click.option('--margin', 'margin', type=click.IntRange(0),
              help="Pruning margin in voxels  [default: 3 at tau 0.1, else from tau]")
@click.option('--axis', 'axis', type=click.Choice(['x', 'y', 'z']), default=X, show_default=True,
              help="Slicing axis")
@click.option('--sections', 'sections', type=click.IntRange(2), default=DEFAULT_S_MESH, show_default=True,
              help="Cross-sections when meshing params")
@click.option('--threads', 'threads', type=click.IntRange(1), default=1, show_default=True)
@click.option('--hard', 'hard', is_flag=True, default=False, help="Threshold at 0.5 and write uint8")
@click.option('--out', 'out', required=True, help="Output NRRD")
@click.pass_context
@exit_codes
def exec_voxelize(ctx, params_path, mesh_path, shape, tau, margin, axis, sections, threads, hard, out):
    """Soft (float32) or hard (uint8) voxelization:

        $ vesselfit voxelize --params fit.json --shape 64,64,64 --out soft.nrrd
    """
    if bool(params_path) == bool(mesh_path):
        raise InputError("Pass exactly one of --params and --mesh")
    shape = parse_shape(shape)
    mesh = read_mesh_obj(mesh_path) if mesh_path else vessel_mesh(read_params_json(params_path), sections)
    if hard:
        write_volume(hard_voxelize(mesh, shape, tau=tau, margin=margin, axis=axis, threads=threads), out)
    else:
        soft = soft_voxelize(mesh, shape, tau=tau, margin=margin, axis=axis, threads=threads)
        write_volume(soft.grid.detach().numpy().astype(np.float32), out)


@main.command("eval", short_help="Compare a predicted segmentation with a reference.")
@click.option('--pred', 'pred', required=True, help="Predicted volume (NRRD, soft volumes thresholded at 0.5)")
@click.option('--ref', 'ref', required=True, help="Reference segmentation (NRRD)")
@click.option('--pred-centerline', 'pred_centerline', help="Predicted centerline polyline")
@click.option('--ref-centerline', 'ref_centerline', help="Reference centerline polyline")
@click.option('--mesh', 'mesh_path', help="Mesh (OBJ) whose quality is reported")
@click.option('--out', 'out', required=True, help="Report JSON")
@click.pass_context
@exit_codes
def exec_eval(ctx, pred, ref, pred_centerline, ref_centerline, mesh_path, out):
    """Dice, hd95 and chamfer. Distances compare the centerlines when both are given and the
    segmentation boundaries otherwise:

        $ vesselfit eval --pred fit.nrrd --ref seg.nrrd --out eval.json
    """
    if bool(pred_centerline) != bool(ref_centerline):
        raise InputError("Pass both --pred-centerline and --ref-centerline, or neither")
    pred_points = read_polyline(pred_centerline) if pred_centerline else None
    ref_points = read_polyline(ref_centerline) if ref_centerline else None
    quality = mesh_quality(read_mesh_obj(mesh_path)) if mesh_path else None
    report = evaluate(_binary(read_volume(pred)), _binary(read_volume(ref)), pred_points, ref_points, quality)
    _write_json(report.to_dict(), out)
    log("dice {:.4f}, hd95 {:.3f}, chamfer {:.3f}".format(report.dice, report.hd95, report.chamfer))


@main.command("synth", short_help="Generate a synthetic vessel case.")
@click.option('--kind', 'kind', type=click.Choice(SYNTH_KINDS), required=True)
@click.option('--shape', 'shape', default='64,64,64', show_default=True, help="Grid shape X,Y,Z")
@click.option('--seed', 'seed', type=int, default=0, show_default=True)
@click.option('--noise', 'noise', is_flag=True, default=False, help="Jitter the segmentation boundary")
@click.option('--keep-fraction', 'keep_fraction', type=click.FloatRange(0, 1, min_open=True),
              help="Also write a sparse slice mask keeping this fraction of slices")
@click.option('--axis', 'axis', type=click.Choice(['x', 'y', 'z']), default=Z, show_default=True,
              help="Axial direction of the centerline extraction and slice mask")
@click.option('--out-dir', 'out_dir', required=True)
@click.pass_context
@exit_codes
def exec_synth(ctx, kind, shape, seed, noise, keep_fraction, axis, out_dir):
    """Write segmentation.nrrd, centerline.txt (slice-wise center of mass), centerline_gt.txt,
    params.json (ground truth) and optionally slice_mask.json into a directory:

        $ vesselfit synth --kind helix --seed 1 --out-dir case
    """
    case = make_case(kind, parse_shape(shape), seed, noise=noise, keep_fraction=keep_fraction, axis=axis)
    os.makedirs(out_dir, exist_ok=True)
    write_volume(case.segmentation, os.path.join(out_dir, 'segmentation.nrrd'))
    write_polyline(extract_preliminary_centerline(case.segmentation, axis), os.path.join(out_dir, 'centerline.txt'))
    write_polyline(case.centerline_gt, os.path.join(out_dir, 'centerline_gt.txt'))
    write_params_json(case.true_params, os.path.join(out_dir, 'params.json'))
    if case.slice_mask is not None:
        write_slice_mask(case.slice_mask, os.path.join(out_dir, 'slice_mask.json'))
    log("Wrote {} case ({} foreground voxels) to {}".format(kind, int(case.segmentation.sum()), out_dir))


@main.command("gradcheck", short_help="Check gradients against finite differences.")
@click.option('--fixture', 'fixture', type=click.Choice(sorted(GRADCHECK_SHAPES)), default='straight',
              show_default=True)
@click.option('--h', 'h', type=float, default=DEFAULT_FD_STEP, show_default=True, help="Finite-difference step")
@click.option('--stage', 'stages', type=click.Choice(['2', '3']), multiple=True,
              help="Stage losses to check  [default: 2 and 3]")
@click.option('--rel-tol', 'rel_tol', type=float, default=FD_REL_TOL, show_default=True)
@click.option('--abs-tol', 'abs_tol', type=float, default=FD_ABS_TOL, show_default=True)
@click.option('--report', 'report_path', help="Report JSON")
@click.pass_context
@exit_codes
def exec_gradcheck(ctx, fixture, h, stages, rel_tol, abs_tol, report_path):
    """Compare autograd against central differences of the stage losses:

        $ vesselfit gradcheck --fixture arc --h 1e-3

    Exit code 0 iff at least 99% of the coordinates agree for every checked stage.
    """
    torch.set_num_threads(1)
    case, start = gradcheck_fixture(fixture)
    inputs = FitInputs(case.segmentation, case.centerline_gt)
    results, passed = {}, True
    for stage_id in sorted(int(s) for s in stages or ('2', '3')):
        log("Stage {} loss on the {} fixture".format(stage_id, fixture))
        report = finite_difference_check(start, stage_loss_fn(inputs, stage_id), h, rel_tol, abs_tol, verbose=True)
        results['stage{}'.format(stage_id)] = report.to_dict()
        passed = passed and report.passed(FD_PASS_FRACTION)
    if report_path:
        _write_json(results, report_path)
    if not passed:
        log("Fewer than {:.0%} of the coordinates match finite differences".format(FD_PASS_FRACTION), error=True)
        sys.exit(EXIT_INPUT)
    log("Gradients match finite differences", color='green')


if __name__ == '__main__':
    main()
