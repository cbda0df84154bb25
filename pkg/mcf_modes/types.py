"""Types."""

from pathlib import Path
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]
MultiIndex = Tuple[int, ...]
ScalarField = Callable[[FloatArray], FloatArray]
FieldLike = Union[ScalarField, FloatArray, float]
SymMatrixK = FloatArray
MatrixLike = Union[FloatArray, Sequence[Sequence[float]], List[List[float]]]
PathLike = Union[str, Path]
TauSpan = Tuple[float, float]
