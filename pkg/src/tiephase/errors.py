"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid experiment configuration or inconsistent inputs."""


class NumericError(ArithmeticError):
    """Numerical precondition violated (NaN input, zero illumination, ...)."""


class AliasingError(NumericError):
    """Requested defocus exceeds the sampling bound of the propagation grid."""

    def __init__(self, dz, max_dz):
        self.dz = dz
        self.max_dz = max_dz
        super().__init__(
            f"defocus dz={dz:g} um aliases on this grid; max safe |dz| is {max_dz:.6g} um"
        )
