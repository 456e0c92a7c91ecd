from vesselfit._version import __version__
from vesselfit.utils.constants import AXES
from vesselfit.utils.error import ArgumentError


def axis_index(axis):
    """Map an axis name ('x', 'y' or 'z') to its array dimension"""
    try:
        return AXES.index(str(axis).lower())
    except ValueError:
        raise ArgumentError("Unknown axis '{}', expected one of x, y, z".format(axis))


def parse_shape(text):
    """Parse a grid shape written as "X,Y,Z" into a tuple of 3 positive ints"""
    try:
        shape = tuple(int(part) for part in str(text).split(','))
    except ValueError:
        raise ArgumentError("Invalid shape '{}', expected X,Y,Z".format(text))
    if len(shape) != 3 or min(shape) <= 0:
        raise ArgumentError("Invalid shape '{}', expected 3 positive integers".format(text))
    return shape


def version():
    return __version__
