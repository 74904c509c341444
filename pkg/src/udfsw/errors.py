"""Exception types shared across the package."""


class UdfswError(Exception):
    """Base class for all package errors."""


class ParameterError(UdfswError, ValueError):
    """Invalid shape parameters, empty inputs or malformed configuration."""


class ParseError(UdfswError, ValueError):
    """Malformed mesh or grid file."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class EmptyLevelSet(UdfswError):
    """Marching cubes found no crossing of the requested iso-value."""

    def __init__(self, r, vmin, vmax):
        self.r = r
        self.vmin = vmin
        self.vmax = vmax
        if r <= vmin:
            hint = "iso-value is at or below the smallest sample (r too small)"
        elif r >= vmax:
            hint = "iso-value is at or above the largest sample (r too large)"
        else:
            hint = "no cell straddles the iso-value"
        super().__init__(
            f"empty level set at r={r:g} (samples span [{vmin:g}, {vmax:g}]): {hint}"
        )


class ContractViolation(UdfswError):
    """An operation was called on input that breaks its precondition."""


class NonFiniteLoss(UdfswError):
    """The field returned a non-finite value during optimization.

    ``last_good_mesh`` holds the mesh from before the failing iteration.
    """

    def __init__(self, message, point=None, last_good_mesh=None):
        self.point = point
        self.last_good_mesh = last_good_mesh
        super().__init__(message)
