"""Select the compiled kernel core when available, else the numpy fallback.

Set ``BGLRF_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("BGLRF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

normal_apply = _impl.normal_apply
# the Gram assembly is one large GEMM per band; BLAS beats the compiled loop
kernel_gram = _pykernels.kernel_gram
matting_triplets = _impl.matting_triplets
