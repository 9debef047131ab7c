"""
Exception hierarchy shared by every module of the hybrid GAN kit.
"""


class HybridGanError(Exception):
    """Base class for all errors raised by this package"""


class DimensionError(HybridGanError, ValueError):
    """Tensor shapes or extents do not satisfy an operation's contract"""


class ConfigError(HybridGanError, ValueError):
    """Invalid spec, preset or run configuration value"""


class ContractError(HybridGanError, ValueError):
    """A caller violated an operation precondition"""


class NumericalError(HybridGanError, ArithmeticError):
    """A forward operation turned finite inputs into NaN/Inf"""


class InsufficientDataError(HybridGanError, ValueError):
    """Too few samples to fit a statistic"""


class FormatError(HybridGanError, ValueError):
    """Malformed input file (CIFAR-10 binary, PPM, checkpoint)"""


class CorruptionError(FormatError):
    """Checkpoint manifest and payload disagree"""
