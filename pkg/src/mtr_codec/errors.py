"""Exception types shared across the codec."""


class ContractError(ValueError):
    """Operands violate an op's shape or range contract."""


class ConfigurationError(ValueError):
    """Dimensions, weights, or settings are inconsistent with each other."""


class DecodeError(ValueError):
    """A bitstream, weights file, or text input is malformed or corrupt."""
