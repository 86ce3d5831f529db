"""Backend selection for the spatial kernels.

The compiled extension is used when it was built; otherwise the numpy
implementation.  ``DTRATTUNET_KERNELS=numpy`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _npkernels

numpy_backend = _npkernels

try:
    from . import _ckernels as compiled_backend  # type: ignore[attr-defined]
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("DTRATTUNET_KERNELS", "").lower() != "numpy":
    _impl = compiled_backend
    BACKEND = "cython"
else:
    _impl = numpy_backend
    BACKEND = "numpy"

im2col3x3 = _impl.im2col3x3
col2im3x3 = _impl.col2im3x3
maxpool2x2 = _impl.maxpool2x2
maxpool2x2_backward = _impl.maxpool2x2_backward
upsample2x = _impl.upsample2x
upsample2x_backward = _impl.upsample2x_backward
