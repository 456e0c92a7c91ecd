import json

import numpy as np
import pytest

from vesselfit.tests.resources.shared import box_mesh, temp_directory, tube_params
from vesselfit.utils.error import FormatError, LengthError
from vesselfit.utils.fileio import (PARAMS_KEYS, params_from_dict, params_to_dict, read_mesh_obj, read_params_json,
                                    read_polyline, read_slice_mask, read_volume, read_volume_header, write_mesh_obj,
                                    write_params_json, write_polyline, write_slice_mask, write_volume)
from vesselfit.utils.model import VesselParams
from vesselfit.utils.synth import SliceMask

HEADER = b"NRRD0004\ntype: uint8\ndimension: 3\nsizes: 8 8 8\nencoding: raw\n\n"


def _write_bytes(path, data):
    with open(path, 'wb') as f:
        f.write(data)


def test_volume_uint8():
    grid = (np.random.default_rng(0).random((5, 6, 7)) > 0.5).astype(np.uint8)
    with temp_directory():
        write_volume(grid, 'seg.nrrd')
        header = read_volume_header('seg.nrrd')
        loaded = read_volume('seg.nrrd')
    assert header.sizes == (5, 6, 7)
    assert loaded.dtype == np.uint8
    assert np.array_equal(loaded, grid)


def test_volume_float():
    grid = np.random.default_rng(1).random((4, 3, 2))
    with temp_directory():
        write_volume(grid, 'soft.nrrd')
        loaded = read_volume('soft.nrrd')
    assert loaded.dtype == np.float32
    assert np.array_equal(loaded, grid.astype(np.float32))


def test_volume_manual_header():
    with temp_directory():
        _write_bytes('seg.nrrd', HEADER + bytes(512))
        assert read_volume('seg.nrrd').shape == (8, 8, 8)


@pytest.mark.parametrize("length", [511, 513])
def test_volume_length_mismatch(length):
    with temp_directory():
        _write_bytes('seg.nrrd', HEADER + bytes(length))
        with pytest.raises(LengthError):
            read_volume('seg.nrrd')


@pytest.mark.parametrize(
    "replace, field",
    [
        ((b'encoding: raw', b'encoding: gzip'), 'encoding'),
        ((b'dimension: 3\nsizes: 8 8 8', b'dimension: 2\nsizes: 8 64'), 'dimension'),
        ((b'type: uint8', b'type: int16'), 'type'),
    ]
)
def test_volume_unsupported_fields(replace, field):
    with temp_directory():
        _write_bytes('seg.nrrd', HEADER.replace(*replace) + bytes(512))
        with pytest.raises(FormatError) as e:
            read_volume('seg.nrrd')
    assert field in str(e.value)


def test_volume_written_as_nrrd0004():
    with temp_directory():
        write_volume(np.ones((2, 3, 4)), 'soft.nrrd')
        with open('soft.nrrd', 'rb') as f:
            assert f.readline() == b'NRRD0004\n'
        assert read_volume_header('soft.nrrd').sizes == (2, 3, 4)


@pytest.mark.parametrize(
    "header",
    [
        HEADER.replace(b'NRRD0004', b'NRRD0005'),
        HEADER.replace(b'NRRD0004', b'NRRD0001'),
        HEADER.replace(b'encoding: raw\n', b'encoding: raw\nspace dimension: 3\nspace origin: (1,0,0)\n'),
    ]
)
def test_volume_rejected_headers(header):
    with temp_directory():
        _write_bytes('seg.nrrd', header + bytes(512))
        with pytest.raises(FormatError):
            read_volume('seg.nrrd')


def test_volume_not_nrrd():
    with temp_directory():
        _write_bytes('seg.nrrd', b'P5\n8 8\n255\n' + bytes(64))
        with pytest.raises(FormatError):
            read_volume('seg.nrrd')


def test_mesh_obj_roundtrip():
    mesh = box_mesh((0.1, 0.2, 0.3), (1.0 / 3.0, 2.5, 7.25))
    with temp_directory():
        write_mesh_obj(mesh, 'box.obj')
        with open('box.obj') as f:
            assert f.readline().startswith('# vesselfit')
        loaded = read_mesh_obj('box.obj')
    assert np.array_equal(loaded.vertices_numpy(), mesh.vertices_numpy())
    assert np.array_equal(loaded.faces, mesh.faces)


@pytest.mark.parametrize(
    "content",
    [
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n",
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nf 1 2 4\n",
        "v 0 0 0\nv 1 0 zero\n",
        "v 0 0 0\nvn 0 0 1\n",
    ]
)
def test_mesh_obj_invalid(content):
    with temp_directory():
        with open('bad.obj', 'w') as f:
            f.write(content)
        with pytest.raises(FormatError):
            read_mesh_obj('bad.obj')


def test_params_roundtrip():
    params = tube_params(jitter=1.0, seed=3)
    params.adjustment_cp = np.random.default_rng(0).normal(size=params.adjustment_cp.shape) / 3.0
    with temp_directory():
        write_params_json(params, 'params.json')
        with open('params.json') as f:
            data = json.load(f)
        loaded = read_params_json('params.json')
    assert sorted(data) == sorted(PARAMS_KEYS)
    assert data['version'] == 1 and data['P'] == 10
    assert loaded == params


@pytest.mark.parametrize(
    "change",
    [
        {'extra': 1},
        {'version': 2},
        {'P': 9},
        {'centerline_cp': [[0, 0]] * 6},
        {'radius_cp': 'wide'},
        {'radius_cp': [1.0, 1.0, 1.0]},
    ]
)
def test_params_invalid(change):
    data = params_to_dict(tube_params())
    data.update(change)
    with pytest.raises(FormatError):
        params_from_dict(data)


def test_params_missing_key():
    data = params_to_dict(tube_params())
    del data['radius_cp']
    with pytest.raises(FormatError) as e:
        params_from_dict(data, 'fit.json')
    assert "fit.json: missing key 'radius_cp'" in str(e.value)


def test_params_invalid_json():
    with temp_directory():
        with open('params.json', 'w') as f:
            f.write('{"version": 1,')
        with pytest.raises(FormatError):
            read_params_json('params.json')


def test_params_counts_differ_warning(capsys):
    params = VesselParams(np.zeros((6, 3)) + np.arange(6)[:, None], np.ones(4), np.zeros((5, 10)))
    loaded = params_from_dict(params_to_dict(params))
    assert loaded.n_a == 5
    assert 'N_r = 4 differs from N_a = 5' in capsys.readouterr().out


def test_polyline_roundtrip():
    points = np.random.default_rng(2).normal(size=(12, 3)) * 10
    with temp_directory():
        write_polyline(points, 'cl.txt')
        assert np.array_equal(read_polyline('cl.txt'), points)


def test_polyline_crlf_and_comments():
    with temp_directory():
        with open('cl.txt', 'wb') as f:
            f.write(b'# centerline\r\n1 2 3\r\n\r\n4.5 5 6\r\n')
        assert read_polyline('cl.txt').tolist() == [[1, 2, 3], [4.5, 5, 6]]


@pytest.mark.parametrize(
    "content, message",
    [
        ("1 2 3\n1 2\n", "cl.txt:2:"),
        ("1 2 3\na b c\n", "cl.txt:2:"),
        ("# nothing\n", "no points"),
        ("1 2 nan\n", "non-finite"),
    ]
)
def test_polyline_invalid(content, message):
    with temp_directory():
        with open('cl.txt', 'w') as f:
            f.write(content)
        with pytest.raises(FormatError) as e:
            read_polyline('cl.txt')
    assert message in str(e.value)


def test_slice_mask_roundtrip():
    mask = SliceMask('z', 64, [12, 32, 51], keep_fraction=0.05)
    with temp_directory():
        write_slice_mask(mask, 'mask.json')
        loaded = read_slice_mask('mask.json')
    assert loaded == mask
    assert loaded.keep_fraction == 0.05


@pytest.mark.parametrize(
    "data",
    [
        {'axis': 'z', 'size': 8, 'slices': [1], 'step': 2},
        {'axis': 'z', 'slices': [1]},
        {'axis': 'q', 'size': 8, 'slices': [1]},
        {'axis': 'z', 'size': 8, 'slices': [9]},
        [1, 2, 3],
    ]
)
def test_slice_mask_invalid(data):
    with temp_directory():
        with open('mask.json', 'w') as f:
            json.dump(data, f)
        with pytest.raises(FormatError):
            read_slice_mask('mask.json')
