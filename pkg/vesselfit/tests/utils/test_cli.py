import json
import os
from unittest import mock

import numpy as np
import pytest
from click.testing import CliRunner

from vesselfit.__main__ import main
from vesselfit.tests.resources.shared import temp_directory
from vesselfit.utils.diff import FiniteDifferenceReport
from vesselfit.utils.error import DivergenceError, SliceError, StageError
from vesselfit.utils.fileio import read_mesh_obj, read_params_json, read_polyline, read_slice_mask, read_volume
from vesselfit.utils.voxelizer import soft_voxelize

TINY_CONFIG = "n_c=6\nn_r=4\np=8\ns_loss=32\ns_mesh=16\niterations=[6, 3, 3, 2]\n"


@pytest.fixture(scope='module')
def runner():
    # Get instance of CliRunner
    runner = CliRunner()
    return runner


def _synth(runner, *extra):
    return runner.invoke(main, ['synth', '--kind', 'straight', '--shape', '24,24,24', '--out-dir', 'case'] +
                         list(extra))


def _fit(runner, *extra):
    with open('tiny.cfg', 'w') as f:
        f.write(TINY_CONFIG)
    return runner.invoke(main, ['fit', '--seg', 'case/segmentation.nrrd', '--centerline', 'case/centerline.txt',
                                '--config', 'tiny.cfg', '-q'] + list(extra))


def test_synth(runner):
    with temp_directory():
        result = _synth(runner, '--keep-fraction', '0.25')
        assert result.exit_code == 0
        assert '[vesselfit] Wrote straight case' in result.output
        assert sorted(os.listdir('case')) == ['centerline.txt', 'centerline_gt.txt', 'params.json',
                                              'segmentation.nrrd', 'slice_mask.json']
        assert read_volume('case/segmentation.nrrd').shape == (24, 24, 24)
        assert read_polyline('case/centerline_gt.txt').shape == (256, 3)
        assert read_slice_mask('case/slice_mask.json').keep_fraction == 0.25
        assert read_params_json('case/params.json').n_radial == 10


def test_synth_invalid(runner):
    with temp_directory():
        result = runner.invoke(main, ['synth', '--kind', 'helix', '--shape', '24,24,24', '--out-dir', 'c'])
        assert result.exit_code == 1
        result = runner.invoke(main, ['synth', '--kind', 'straight', '--shape', '24,24', '--out-dir', 'c'])
        assert result.exit_code == 1


def test_fit(runner):
    with temp_directory():
        _synth(runner)
        result = _fit(runner, '--out-params', 'fit.json', '--out-mesh', 'fit.obj', '--out-vox', 'fit.nrrd',
                      '--report', 'report.json')
        assert result.exit_code == 0, result.output
        params = read_params_json('fit.json')
        assert (params.n_c, params.n_r, params.n_radial) == (6, 4, 8)
        assert read_mesh_obj('fit.obj').n_vertices == 16 * 8 + 2
        assert read_volume('fit.nrrd').dtype == np.float32
        with open('report.json') as f:
            report = json.load(f)
        assert [stage['stage'] for stage in report['stages']] == [1, 2, 3]
        assert 0 <= report['dice'] <= 1


def test_fit_stage_flags(runner):
    with temp_directory():
        _synth(runner)
        result = _fit(runner, '--stage4', '--skip-stage', '3', '--out-params', 'fit.json', '--report', 'r.json')
        assert result.exit_code == 0, result.output
        with open('r.json') as f:
            assert [stage['stage'] for stage in json.load(f)['stages']] == [1, 2, 4]


def test_fit_sparse_mask(runner):
    with temp_directory():
        _synth(runner, '--keep-fraction', '0.25')
        result = _fit(runner, '--sparse-mask', 'case/slice_mask.json', '--out-params', 'fit.json',
                      '--report', 'r.json')
        assert result.exit_code == 0, result.output
        with open('r.json') as f:
            assert json.load(f)['sparse_fraction'] == 0.25


def test_fit_deterministic(runner):
    with temp_directory():
        _synth(runner)
        _fit(runner, '--seed', '3', '--threads', '1', '--out-params', 'first.json')
        _fit(runner, '--seed', '3', '--threads', '1', '--out-params', 'second.json')
        with open('first.json', 'rb') as first, open('second.json', 'rb') as second:
            assert first.read() == second.read()


def test_fit_missing_input(runner):
    with temp_directory():
        result = runner.invoke(main, ['fit', '--seg', 'nothing.nrrd', '--centerline', 'cl.txt',
                                      '--out-params', 'fit.json'])
        assert result.exit_code == 1
        assert not os.path.exists('fit.json')


def test_fit_bad_config(runner):
    with temp_directory():
        _synth(runner)
        with open('bad.cfg', 'w') as f:
            f.write('n_c=2\n')
        result = runner.invoke(main, ['fit', '--seg', 'case/segmentation.nrrd', '--centerline',
                                      'case/centerline.txt', '--config', 'bad.cfg', '--out-params', 'fit.json'])
        assert result.exit_code == 1


@pytest.mark.parametrize(
    "error, exit_code",
    [
        (DivergenceError('loss diverged', stage=2), 2),
        (StageError('stage 3 failed', 3, DivergenceError('loss diverged')), 2),
        (StageError('stage 2 failed', 2, SliceError('degenerate plane')), 1),
    ]
)
def test_fit_exit_codes(runner, error, exit_code):
    with temp_directory():
        _synth(runner)
        with mock.patch('vesselfit.__main__.fit_vessel', side_effect=error):
            result = _fit(runner, '--out-params', 'fit.json')
        assert result.exit_code == exit_code
        assert not os.path.exists('fit.json')


def test_mesh(runner):
    with temp_directory():
        _synth(runner)
        result = runner.invoke(main, ['mesh', '--params', 'case/params.json', '--sections', '12', '--out', 'v.obj'])
        assert result.exit_code == 0
        assert '122 vertices, 240 faces' in result.output
        assert read_mesh_obj('v.obj').n_faces == 240
        result = runner.invoke(main, ['mesh', '--params', 'case/params.json', '--radial', '16', '--out', 'w.obj'])
        assert read_mesh_obj('w.obj').n_vertices == 64 * 16 + 2


def test_mesh_bad_params(runner):
    with temp_directory():
        with open('params.json', 'w') as f:
            f.write('{"version": 1}')
        assert runner.invoke(main, ['mesh', '--params', 'params.json', '--out', 'v.obj']).exit_code == 1


def test_voxelize(runner):
    with temp_directory():
        _synth(runner)
        result = runner.invoke(main, ['voxelize', '--params', 'case/params.json', '--shape', '24,24,24',
                                      '--axis', 'z', '--out', 'soft.nrrd'])
        assert result.exit_code == 0
        soft = read_volume('soft.nrrd')
        assert soft.dtype == np.float32 and soft.shape == (24, 24, 24)
        assert 0 <= soft.min() and soft.max() <= 1

        runner.invoke(main, ['mesh', '--params', 'case/params.json', '--out', 'v.obj'])
        result = runner.invoke(main, ['voxelize', '--mesh', 'v.obj', '--shape', '24,24,24', '--axis', 'z',
                                      '--hard', '--out', 'hard.nrrd'])
        assert result.exit_code == 0
        hard = read_volume('hard.nrrd')
        assert hard.dtype == np.uint8
        assert np.array_equal(hard, (soft >= 0.5).astype(np.uint8))


def test_voxelize_needs_one_source(runner):
    with temp_directory():
        result = runner.invoke(main, ['voxelize', '--shape', '8,8,8', '--out', 'v.nrrd'])
        assert result.exit_code == 1
        assert 'exactly one of --params and --mesh' in result.output


@pytest.mark.parametrize(
    "args",
    [
        ['fit', '--seg', 's', '--out-params', 'o'],
        ['voxelize', '--params', 'p.json', '--out', 'v.nrrd'],
        ['mesh', '--params', 'p.json', '--radial', '2', '--out', 'v.obj'],
        ['eval', '--pred', 'p.nrrd', '--ref', 'r.nrrd', '--out', 'e.json', '--bogus'],
        ['synth', '--kind', 'spiral', '--out-dir', 'c'],
    ]
)
def test_usage_errors_exit_input(runner, args):
    with temp_directory():
        result = runner.invoke(main, args)
        assert result.exit_code == 1
        assert 'Error' in result.output


def test_help_lists_defaults(runner):
    result = runner.invoke(main, ['mesh', '--help'])
    assert result.exit_code == 0
    assert 'default: 10' in ' '.join(result.output.split())
    result = runner.invoke(main, ['voxelize', '--help'])
    text = ' '.join(result.output.split())
    assert 'default: 0.1' in text
    assert 'default: 3 at tau 0.1, else from tau' in text


def test_voxelize_margin_follows_tau(runner):
    with temp_directory():
        _synth(runner)
        with mock.patch('vesselfit.__main__.soft_voxelize', wraps=soft_voxelize) as voxelize:
            result = runner.invoke(main, ['voxelize', '--params', 'case/params.json', '--shape', '24,24,24',
                                          '--tau', '1.0', '--out', 'soft.nrrd'])
        assert result.exit_code == 0, result.output
        assert voxelize.call_args[1]['margin'] is None
        runner.invoke(main, ['voxelize', '--params', 'case/params.json', '--shape', '24,24,24', '--tau', '1.0',
                             '--margin', '3', '--out', 'pruned.nrrd'])
        assert np.count_nonzero(read_volume('soft.nrrd')) > np.count_nonzero(read_volume('pruned.nrrd'))


def test_eval(runner):
    with temp_directory():
        _synth(runner)
        result = runner.invoke(main, ['eval', '--pred', 'case/segmentation.nrrd', '--ref', 'case/segmentation.nrrd',
                                      '--pred-centerline', 'case/centerline.txt',
                                      '--ref-centerline', 'case/centerline.txt', '--out', 'eval.json'])
        assert result.exit_code == 0
        with open('eval.json') as f:
            assert json.load(f) == {'chamfer': 0.0, 'dice': 1.0, 'hd95': 0.0}


def test_eval_soft_prediction(runner):
    with temp_directory():
        _synth(runner)
        runner.invoke(main, ['voxelize', '--params', 'case/params.json', '--shape', '24,24,24', '--out', 's.nrrd'])
        runner.invoke(main, ['mesh', '--params', 'case/params.json', '--out', 'v.obj'])
        result = runner.invoke(main, ['eval', '--pred', 's.nrrd', '--ref', 'case/segmentation.nrrd',
                                      '--mesh', 'v.obj', '--out', 'eval.json'])
        assert result.exit_code == 0
        with open('eval.json') as f:
            report = json.load(f)
        assert report['dice'] > 0.8
        assert report['mesh_quality']['n_faces'] == 2 * 64 * 10


def test_eval_one_centerline(runner):
    with temp_directory():
        _synth(runner)
        result = runner.invoke(main, ['eval', '--pred', 'case/segmentation.nrrd', '--ref', 'case/segmentation.nrrd',
                                      '--pred-centerline', 'case/centerline.txt', '--out', 'eval.json'])
        assert result.exit_code == 1


def _fd_report(failing):
    entry = {'group': 'radius', 'index': (0,), 'analytic': 1.0, 'numeric': 2.0, 'rel_error': 0.5}
    return FiniteDifferenceReport([entry], [entry] if failing else [], [], 1e-3)


@pytest.mark.parametrize("failing, exit_code", [(False, 0), (True, 1)])
def test_gradcheck(runner, failing, exit_code):
    with temp_directory():
        with mock.patch('vesselfit.__main__.finite_difference_check', return_value=_fd_report(failing)) as check:
            result = runner.invoke(main, ['gradcheck', '--stage', '2', '--h', '0.002', '--report', 'fd.json'])
        assert result.exit_code == exit_code
        assert check.call_count == 1
        assert check.call_args[0][2] == 0.002
        with open('fd.json') as f:
            assert list(json.load(f)) == ['stage2']


def test_gradcheck_default_stages(runner):
    with mock.patch('vesselfit.__main__.finite_difference_check', return_value=_fd_report(False)) as check:
        result = runner.invoke(main, ['gradcheck'])
    assert result.exit_code == 0
    assert check.call_count == 2
    assert 'Gradients match finite differences' in result.output
