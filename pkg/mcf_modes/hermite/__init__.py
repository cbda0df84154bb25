from .basis import (
    DEFAULT_CAP,
    DegreeCapError,
    Dimensions,
    hermite_eval,
    l_eigenvalue,
    modes_above,
    modes_up_to,
    unit_index,
)
from .modes import ModeVector, apply_l
from .quadrature import (
    QuadratureError,
    QuadratureRule,
    inner,
    product_expand,
    project,
)

__all__ = [
    "DEFAULT_CAP",
    "DegreeCapError",
    "Dimensions",
    "ModeVector",
    "QuadratureError",
    "QuadratureRule",
    "apply_l",
    "hermite_eval",
    "inner",
    "l_eigenvalue",
    "modes_above",
    "modes_up_to",
    "product_expand",
    "project",
    "unit_index",
]
