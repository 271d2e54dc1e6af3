from .operator import OperatorMatrix, SubspaceBasis
from .vector import CoeffFn, HardySpec, random_coeff_fn

__all__ = [
    "CoeffFn",
    "HardySpec",
    "OperatorMatrix",
    "SubspaceBasis",
    "random_coeff_fn",
]
