"""Hot loops, compiled when the extension is built, numpy otherwise.

Set ``FASTCUBIC_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
agd_dense = _fallback.agd_dense
svrg_rank1_epoch = _fallback.svrg_rank1_epoch
power_dense = _fallback.power_dense

if os.environ.get("FASTCUBIC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        agd_dense = _core.agd_dense
        svrg_rank1_epoch = _core.svrg_rank1_epoch
        power_dense = _core.power_dense
