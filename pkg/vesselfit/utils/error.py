class VesselError(Exception):
    """Base class for all errors raised by vesselfit"""
    pass


class ArgumentError(VesselError):
    """Error class for invalid argument values"""
    pass


class DomainError(ArgumentError):
    """Error class for spline parameters outside [0, 1]"""
    pass


class DegenerateGeometryError(VesselError):
    """Error class for degenerate centerlines, frames and faces"""
    pass


class TopologyError(VesselError):
    """Error class for meshes that are not watertight"""
    pass


class SliceError(VesselError):
    """Error class for malformed or degenerate mesh-plane intersections"""
    pass


class BoundsError(VesselError):
    """Error class for meshes that do not fit into the voxel grid"""
    pass


class NumericError(VesselError):
    """Error class for NaN/Inf values, naming the stage they appeared in"""

    def __init__(self, msg, stage=None):
        super(NumericError, self).__init__(msg)
        self.stage = stage


class DivergenceError(VesselError):
    """Error class for optimizations whose loss blew up"""

    def __init__(self, msg, stage=None):
        super(DivergenceError, self).__init__(msg)
        self.stage = stage


class StageError(VesselError):
    """Error class wrapping any failure inside a fit stage"""

    def __init__(self, msg, stage=None, cause=None):
        super(StageError, self).__init__(msg)
        self.stage = stage
        self.cause = cause


class InputError(VesselError):
    """Error class for invalid fit inputs"""
    pass


class FormatError(VesselError):
    """Error class for malformed files"""
    pass


class LengthError(FormatError):
    """Error class for files whose payload is shorter or longer than declared"""
    pass


class ConfigError(VesselError):
    """Error class for config related Exceptions"""
    pass


class GenerationError(VesselError):
    """Error class for synthetic cases that do not fit the grid"""
    pass
