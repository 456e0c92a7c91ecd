import pytest

from vesselfit.utils.error import (ArgumentError, BoundsError, ConfigError, DegenerateGeometryError, DivergenceError,
                                   DomainError, FormatError, GenerationError, InputError, LengthError, NumericError,
                                   SliceError, StageError, TopologyError, VesselError)


@pytest.mark.parametrize(
    "Error",
    [
        ArgumentError,
        DomainError,
        DegenerateGeometryError,
        TopologyError,
        SliceError,
        BoundsError,
        InputError,
        FormatError,
        LengthError,
        ConfigError,
        GenerationError,
    ]
)
def test_error(Error):
    msg = 'This is a error'
    e = Error(msg)
    assert e.args == (msg,)
    assert isinstance(e, VesselError)


@pytest.mark.parametrize("Error", [NumericError, DivergenceError])
def test_error_with_stage(Error):
    e = Error('Loss is NaN', stage=2)
    assert e.args == ('Loss is NaN',)
    assert e.stage == 2
    assert Error('Loss is NaN').stage is None


def test_stage_error():
    cause = SliceError('degenerate plane')
    e = StageError('Stage 3 failed', 3, cause)
    assert (e.stage, e.cause) == (3, cause)


def test_error_hierarchy():
    assert issubclass(DomainError, ArgumentError)
    assert issubclass(LengthError, FormatError)
