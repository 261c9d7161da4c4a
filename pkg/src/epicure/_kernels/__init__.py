"""Hot-kernel backend selection.

Imports the compiled extension when present, otherwise the numpy reference
implementation. EPICURE_FORCE_REF=1 forces the reference backend.
"""

from __future__ import annotations

import logging
import os

from . import ref

logger = logging.getLogger(__name__)

HAVE_COMPILED = False
_impl = ref

if not os.environ.get("EPICURE_FORCE_REF"):
    try:
        from . import _core as _compiled

        _impl = _compiled
        HAVE_COMPILED = True
    except ImportError:
        logger.info("compiled kernels unavailable, using numpy reference backend")

sgns_batch = _impl.sgns_batch
generate_walk_batch = _impl.generate_walk_batch


def backend_name() -> str:
    return "compiled" if HAVE_COMPILED else "numpy"
