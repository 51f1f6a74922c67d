"""Interpreter selection: compiled engine when available, numpy fallback otherwise.

Set DSFUSE_PURE_PYTHON=1 to force the fallback (used by tests and the
engine benchmark; both engines are importable side by side regardless).
"""

import os

from . import _engine_py

if os.environ.get("DSFUSE_PURE_PYTHON"):
    active = _engine_py
else:
    try:
        from . import _engine_c as active
    except ImportError:
        active = _engine_py

BACKEND = active.NAME
