import math

import numpy as np
import pytest

from vesselfit.tests.resources.shared import box_mesh, sphere_mesh, tube_params
from vesselfit.utils.error import BoundsError, DegenerateGeometryError, TopologyError
from vesselfit.utils.model import vessel_mesh
from vesselfit.utils.sdf import (exact_sdf, inside_mask, point_triangle_distance, rasterize_exact,
                                 unsigned_distance, voxel_centers)

TRIANGLE = [[0, 0, 0], [1, 0, 0], [0, 1, 0]]


@pytest.mark.parametrize(
    "point, expected",
    [
        ((0.2, 0.2, 1.0), 1.0),
        ((0.2, 0.2, -0.5), 0.5),
        ((2.0, 0.0, 0.0), 1.0),
        ((-1.0, -1.0, 0.0), math.sqrt(2.0)),
        ((1.0, 1.0, 0.0), math.sqrt(0.5)),
        ((0.5, -2.0, 2.0), math.sqrt(8.0)),
    ]
)
def test_point_triangle_distance(point, expected):
    assert point_triangle_distance(point, TRIANGLE) == pytest.approx(expected, abs=1e-12)


def test_point_triangle_distance_degenerate():
    with pytest.raises(DegenerateGeometryError):
        point_triangle_distance((0, 0, 1), [[0, 0, 0], [1, 1, 1], [2, 2, 2]])


@pytest.mark.parametrize(
    "point, expected",
    [
        ((4.0, 4.0, 4.0), 2.0),
        ((2.5, 4.0, 4.0), 0.5),
        ((7.0, 4.0, 4.0), -1.0),
        ((8.0, 8.0, 8.0), -math.sqrt(12.0)),
        ((4.0, 0.0, 4.0), -2.0),
    ]
)
def test_exact_sdf_box(point, expected):
    assert exact_sdf(box_mesh(), point) == pytest.approx(expected, abs=1e-12)


def test_exact_sdf_array():
    sdf = exact_sdf(box_mesh(), [[4.0, 4.0, 4.0], [7.0, 4.0, 4.0]])
    assert sdf.shape == (2,)
    assert np.allclose(sdf, [2.0, -1.0])


def test_accelerated_distance_matches_brute_force():
    mesh = vessel_mesh(tube_params(jitter=1.0, seed=3), 24)
    points = np.random.default_rng(0).uniform(0, 24, size=(200, 3))
    assert np.allclose(unsigned_distance(mesh, points), unsigned_distance(mesh, points, brute_force=True),
                       atol=1e-12)


def test_inside_mask_tube():
    params = tube_params(radius=4.0, p=32)
    mesh = vessel_mesh(params, 16)
    center = params.centerline_cp[0] * 0.5 + params.centerline_cp[-1] * 0.5
    points = center + np.array([[0, 0, 0], [3.5, 0, 0], [0, 4.5, 0], [0, 0, 9.0]])
    assert inside_mask(mesh, points).tolist() == [True, True, False, False]


def test_exact_sdf_not_watertight():
    with pytest.raises(TopologyError):
        exact_sdf(box_mesh().remove_face(0), (4, 4, 4))


def test_rasterize_exact_box():
    grid = rasterize_exact(box_mesh(), (8, 8, 8))
    assert grid.dtype == np.uint8
    assert grid.sum() == 64
    assert grid[2:6, 2:6, 2:6].all()


def test_rasterize_exact_grazing_rows():
    grid = rasterize_exact(box_mesh((1.5, 1.5, 1.5), (5.5, 5.5, 5.5)), (8, 8, 8))
    assert grid[2:5, 2:5, 2:5].all()
    assert grid[6:].sum() == 0 and grid[:, 6:].sum() == 0 and grid[:, :, 6:].sum() == 0
    assert grid[0].sum() == 0 and grid[:, 0].sum() == 0 and grid[:, :, 0].sum() == 0


def test_rasterize_exact_matches_sdf_sign():
    mesh = vessel_mesh(tube_params(jitter=1.0, seed=5), 24)
    grid = rasterize_exact(mesh, (24, 24, 24))
    sdf = exact_sdf(mesh, voxel_centers((24, 24, 24)))
    clear = np.abs(sdf) > 1e-6
    assert np.array_equal(grid.ravel()[clear] == 1, sdf[clear] > 0)


def test_rasterize_exact_bounds():
    with pytest.raises(BoundsError):
        rasterize_exact(box_mesh((2, 2, 2), (9, 6, 6)), (8, 8, 8))


def test_rasterize_exact_clip():
    grid = rasterize_exact(box_mesh((2, 2, 2), (9, 6, 6)), (8, 8, 8), clip=True)
    assert grid.sum() == 6 * 4 * 4


def test_voxel_centers():
    centers = voxel_centers((2, 3, 4))
    assert centers.shape == (24, 3)
    assert centers[0].tolist() == [0.5, 0.5, 0.5]
    assert centers[1].tolist() == [0.5, 0.5, 1.5]
    assert centers[-1].tolist() == [1.5, 2.5, 3.5]


@pytest.mark.parametrize("seed", [0, 1])
def test_point_triangle_distance_against_sampling(seed):
    rng = np.random.default_rng(seed)
    triangle = rng.uniform(0, 4, size=(3, 3))
    weights = rng.dirichlet(np.ones(3), size=20000)
    samples = np.concatenate([weights @ triangle, triangle])
    for point in rng.uniform(-2, 6, size=(10, 3)):
        sampled = np.linalg.norm(samples - point, axis=1).min()
        distance = point_triangle_distance(point, triangle)
        assert distance <= sampled + 1e-12
        assert sampled - distance < 0.05


def test_exact_sdf_is_one_lipschitz():
    mesh = vessel_mesh(tube_params(jitter=1.0, seed=6), 24)
    rng = np.random.default_rng(1)
    first = rng.uniform(2, 22, size=(300, 3))
    second = first + rng.normal(scale=1.0, size=(300, 3))
    difference = np.abs(exact_sdf(mesh, first) - exact_sdf(mesh, second))
    assert (difference <= np.linalg.norm(first - second, axis=1) + 1e-9).all()


def test_exact_sdf_box_half_spaces():
    low, high = np.array([2.0, 2.0, 2.0]), np.array([6.0, 6.0, 6.0])
    points = np.random.default_rng(2).uniform(0, 8, size=(500, 3))
    inside = np.minimum(points - low, high - points).min(axis=1)
    outside = np.linalg.norm(np.maximum(np.maximum(low - points, points - high), 0.0), axis=1)
    expected = np.where(inside > 0, inside, -outside)
    assert np.allclose(exact_sdf(box_mesh(), points), expected, atol=1e-12)


def test_exact_sdf_changes_sign_twice_along_lines():
    center, radius = np.array([12.3, 12.1, 11.8]), 7.0
    mesh = sphere_mesh(center, radius)
    s = np.linspace(-11.0, 11.0, 221) + 0.013
    for direction in np.random.default_rng(3).normal(size=(8, 3)):
        direction = direction / np.linalg.norm(direction)
        sdf = exact_sdf(mesh, center + np.outer(s, direction))
        flips = np.nonzero(np.diff(np.sign(sdf)))[0]
        assert len(flips) == 2
        assert np.abs(np.abs(s[flips]) - radius).max() < 0.2


def test_rasterize_exact_sphere_volume():
    mesh = sphere_mesh(radius=7.0)
    expected = 4.0 / 3.0 * math.pi * 7.0 ** 3
    assert float(mesh.signed_volume()) == pytest.approx(expected, rel=0.02)
    assert rasterize_exact(mesh, (24, 24, 24)).sum() == pytest.approx(expected, rel=0.03)
