import pytest

from vesselfit._version import __version__
from vesselfit.utils.error import ArgumentError
from vesselfit.utils.misc import axis_index, parse_shape, version


@pytest.mark.parametrize(
    "axis, expected_result",
    [
        ("x", 0),
        ("y", 1),
        ("z", 2),
        ("Z", 2),
    ]
)
def test_axis_index(axis, expected_result):
    assert axis_index(axis) == expected_result


def test_axis_index_unknown():
    with pytest.raises(ArgumentError):
        axis_index("w")


@pytest.mark.parametrize(
    "text, expected_result",
    [
        ("64,64,64", (64, 64, 64)),
        ("24, 32,48", (24, 32, 48)),
    ]
)
def test_parse_shape(text, expected_result):
    assert parse_shape(text) == expected_result


@pytest.mark.parametrize("text", ["64,64", "64,0,64", "a,b,c", "1,2,3,4"])
def test_parse_shape_invalid(text):
    with pytest.raises(ArgumentError):
        parse_shape(text)


def test_version():
    assert version() == __version__
