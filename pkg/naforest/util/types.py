"""Array type aliases of the naforest package."""
import numpy as np
import numpy.typing as npt

#: Real valued numpy array (features, targets, thresholds).
FloatArray = npt.NDArray[np.float64]
#: Integer numpy array (row indices, node ids, leaf ids).
IndexArray = npt.NDArray[np.int64]
