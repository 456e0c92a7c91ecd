"""Readers and writers for NRRD volumes, OBJ meshes, params JSON, polylines and slice masks"""
import io
import json

import nrrd
import numpy as np

from vesselfit.utils.constants import PARAMS_VERSION
from vesselfit.utils.error import ArgumentError, FormatError, LengthError
from vesselfit.utils.logger import log
from vesselfit.utils.mesh import TriangleMesh
from vesselfit.utils.misc import version
from vesselfit.utils.model import VesselParams
from vesselfit.utils.synth import SliceMask

NRRD_MAGIC = b'NRRD0004'
NRRD_TYPES = {
    'uint8': np.dtype('<u1'),
    'uchar': np.dtype('<u1'),
    'unsigned char': np.dtype('<u1'),
    'uint8_t': np.dtype('<u1'),
    'float': np.dtype('<f4'),
}
PARAMS_KEYS = ['version', 'P', 'centerline_cp', 'radius_cp', 'adjustment_cp']
SLICE_MASK_KEYS = {'axis', 'size', 'slices', 'keep_fraction'}


class VolumeHeader(object):
    """The supported subset of an NRRD header: 3D, uint8 or float32, raw, unit axis-aligned voxels"""

    def __init__(self, sizes, dtype):
        self.sizes = tuple(int(s) for s in sizes)
        self.dtype = np.dtype(dtype)

    @property
    def payload_length(self):
        return int(np.prod(self.sizes)) * self.dtype.itemsize

    @classmethod
    def from_nrrd(cls, header):
        """Validate a pynrrd header dict; unsupported fields raise FormatError naming the field"""
        if 'data file' in header or 'datafile' in header:
            raise FormatError("Unsupported field 'data file': detached data is not supported")
        if int(header.get('dimension', 0)) != 3:
            raise FormatError("Unsupported field 'dimension': expected 3, got {}".format(header.get('dimension')))
        type_name = str(header.get('type', '')).lower()
        if type_name not in NRRD_TYPES:
            raise FormatError("Unsupported field 'type': {}".format(header.get('type')))
        if str(header.get('encoding', '')).lower() != 'raw':
            raise FormatError("Unsupported field 'encoding': {}".format(header.get('encoding')))
        dtype = NRRD_TYPES[type_name]
        if dtype.itemsize > 1 and str(header.get('endian', 'little')).lower() != 'little':
            raise FormatError("Unsupported field 'endian': {}".format(header.get('endian')))
        if 'space origin' in header:
            raise FormatError("Unsupported field 'space origin': volumes start at the grid origin")
        if 'space directions' in header:
            directions = np.asarray(header['space directions'], dtype=np.float64)
            if directions.shape != (3, 3) or not np.array_equal(directions, np.eye(3)):
                raise FormatError("Unsupported field 'space directions': only unit axis-aligned voxels")
        if 'spacings' in header and not np.array_equal(np.asarray(header['spacings'], dtype=np.float64), np.ones(3)):
            raise FormatError("Unsupported field 'spacings': only unit voxels")
        sizes = np.asarray(header.get('sizes', []))
        if sizes.shape != (3,) or (sizes <= 0).any():
            raise FormatError("Unsupported field 'sizes': {}".format(header.get('sizes')))
        return cls(sizes, dtype)


def read_volume_header(path):
    """Parse and validate the header of an NRRD file, checking the payload length"""
    with open(path, 'rb') as f:
        raw = f.read()
    magic = raw.split(b'\n', 1)[0].rstrip(b'\r')
    if magic != NRRD_MAGIC:
        raise FormatError("{}: expected NRRD magic {}, got {!r}".format(path, NRRD_MAGIC.decode(), magic[:16]))
    end = raw.find(b'\n\n')
    if end < 0:
        raise FormatError("{}: header is not terminated by a blank line".format(path))
    try:
        header = nrrd.read_header(io.BytesIO(raw[:end + 2]))
    except nrrd.NRRDError as e:
        raise FormatError("{}: {}".format(path, e))
    volume = VolumeHeader.from_nrrd(header)
    length = len(raw) - (end + 2)
    if length != volume.payload_length:
        raise LengthError("{}: payload has {} bytes, header declares {}".format(path, length, volume.payload_length))
    return volume


def read_volume(path):
    """Read a 3D NRRD volume as uint8 (binary) or float32 (soft) array indexed (x, y, z)"""
    volume = read_volume_header(path)
    data, _ = nrrd.read(path, index_order='F')
    return np.ascontiguousarray(data, dtype=volume.dtype.newbyteorder('='))


def write_volume(grid, path):
    """Write a 3D grid as raw NRRD0004: float grids as float32, everything else as uint8"""
    grid = grid.detach().numpy() if hasattr(grid, 'detach') else np.asarray(grid)
    if grid.ndim != 3:
        raise ArgumentError("Volumes must be 3D, got shape {}".format(grid.shape))
    type_name = 'float' if grid.dtype.kind == 'f' else 'uint8'
    grid = grid.astype(NRRD_TYPES[type_name])
    lines = [
        NRRD_MAGIC.decode(),
        '# vesselfit {}'.format(version()),
        'type: {}'.format(type_name),
        'dimension: 3',
        'space dimension: 3',
        'sizes: {}'.format(nrrd.format_number_list(np.asarray(grid.shape))),
        'space directions: {}'.format(nrrd.format_optional_matrix(np.eye(3))),
        'endian: little',
        'encoding: raw',
    ]
    with open(path, 'wb') as f:
        f.write(('\n'.join(lines) + '\n\n').encode('ascii'))
        f.write(grid.tobytes(order='F'))


def write_mesh_obj(mesh, path):
    with open(path, 'w') as f:
        f.write('# vesselfit {}: {} vertices, {} faces\n'.format(version(), mesh.n_vertices, mesh.n_faces))
        for x, y, z in mesh.vertices_numpy():
            f.write('v {:.17g} {:.17g} {:.17g}\n'.format(x, y, z))
        for a, b, c in mesh.faces + 1:
            f.write('f {} {} {}\n'.format(a, b, c))


def read_mesh_obj(path):
    """Read an OBJ holding only vertices, triangles and comments"""
    vertices, faces = [], []
    with open(path, 'r') as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts or parts[0].startswith('#'):
                continue
            try:
                if parts[0] == 'v' and len(parts) == 4:
                    vertices.append([float(v) for v in parts[1:]])
                    continue
                if parts[0] == 'f':
                    if len(parts) != 4:
                        raise FormatError("{}:{}: face with {} vertices, only triangles are supported"
                                          .format(path, lineno, len(parts) - 1))
                    faces.append([int(v.split('/')[0]) for v in parts[1:]])
                    continue
            except ValueError:
                raise FormatError("{}:{}: malformed '{}' line".format(path, lineno, parts[0]))
            raise FormatError("{}:{}: unsupported line '{}'".format(path, lineno, line.strip()))
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if faces.size and (faces.min() < 1 or faces.max() > len(vertices)):
        raise FormatError("{}: face index out of range (1..{})".format(path, len(vertices)))
    return TriangleMesh(np.asarray(vertices, dtype=np.float64).reshape(-1, 3), faces - 1)


def params_to_dict(params):
    return {
        'version': PARAMS_VERSION,
        'P': params.n_radial,
        'centerline_cp': params.centerline_cp.tolist(),
        'radius_cp': params.radius_cp.tolist(),
        'adjustment_cp': params.adjustment_cp.tolist(),
    }


def params_from_dict(data, source='<params>'):
    if not isinstance(data, dict):
        raise FormatError("{}: expected a JSON object".format(source))
    for key in data:
        if key not in PARAMS_KEYS:
            raise FormatError("{}: unknown key '{}'".format(source, key))
    for key in PARAMS_KEYS:
        if key not in data:
            raise FormatError("{}: missing key '{}'".format(source, key))
    if data['version'] != PARAMS_VERSION:
        raise FormatError("{}: unsupported 'version' {}".format(source, data['version']))
    try:
        centerline = np.asarray(data['centerline_cp'], dtype=np.float64)
        radius = np.asarray(data['radius_cp'], dtype=np.float64)
        adjustments = np.asarray(data['adjustment_cp'], dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise FormatError("{}: non-numeric control points ({})".format(source, e))
    if centerline.ndim != 2 or centerline.shape[1] != 3:
        raise FormatError("{}: 'centerline_cp' must be a list of [x, y, z]".format(source))
    if radius.ndim != 1:
        raise FormatError("{}: 'radius_cp' must be a list of numbers".format(source))
    if adjustments.ndim != 2 or adjustments.shape[1] != data['P']:
        raise FormatError("{}: 'adjustment_cp' must be a list of {}-vectors".format(source, data['P']))
    try:
        params = VesselParams(centerline, radius, adjustments)
    except ArgumentError as e:
        raise FormatError("{}: {}".format(source, e))
    if params.n_r != params.n_a:
        log("{}: N_r = {} differs from N_a = {}".format(source, params.n_r, params.n_a), warn=True)
    return params


def write_params_json(params, path):
    with open(path, 'w') as f:
        json.dump(params_to_dict(params), f, indent=2)
        f.write('\n')


def read_params_json(path):
    with open(path, 'r') as f:
        try:
            data = json.load(f)
        except ValueError as e:
            raise FormatError("{}: invalid JSON ({})".format(path, e))
    return params_from_dict(data, path)


def read_polyline(path):
    """Read "x y z" lines into an (N, 3) array; blank lines and '#' comments are skipped"""
    points = []
    with open(path, 'r', newline=None) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            parts = line.split()
            try:
                if len(parts) != 3:
                    raise ValueError
                points.append([float(v) for v in parts])
            except ValueError:
                raise FormatError("{}:{}: expected 'x y z', got '{}'".format(path, lineno, line))
    if not points:
        raise FormatError("{}: polyline has no points".format(path))
    points = np.asarray(points, dtype=np.float64)
    if not np.isfinite(points).all():
        raise FormatError("{}: polyline has non-finite coordinates".format(path))
    return points


def write_polyline(points, path):
    with open(path, 'w') as f:
        for x, y, z in np.asarray(points, dtype=np.float64).reshape(-1, 3):
            f.write('{:.17g} {:.17g} {:.17g}\n'.format(x, y, z))


def write_slice_mask(mask, path):
    data = {'axis': mask.axis, 'size': mask.size, 'slices': mask.slices}
    if mask.keep_fraction is not None:
        data['keep_fraction'] = mask.keep_fraction
    with open(path, 'w') as f:
        json.dump(data, f)
        f.write('\n')


def read_slice_mask(path):
    with open(path, 'r') as f:
        try:
            data = json.load(f)
        except ValueError as e:
            raise FormatError("{}: invalid JSON ({})".format(path, e))
    if not isinstance(data, dict):
        raise FormatError("{}: expected a JSON object".format(path))
    for key in data:
        if key not in SLICE_MASK_KEYS:
            raise FormatError("{}: unknown key '{}'".format(path, key))
    for key in ('axis', 'size', 'slices'):
        if key not in data:
            raise FormatError("{}: missing key '{}'".format(path, key))
    try:
        return SliceMask(data['axis'], data['size'], data['slices'], data.get('keep_fraction'))
    except (ArgumentError, TypeError, ValueError) as e:
        raise FormatError("{}: {}".format(path, e))
