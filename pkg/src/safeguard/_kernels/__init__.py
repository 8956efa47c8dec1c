"""Hot-kernel backend selection.

The compiled extension is used when importable; ``SAFEGUARD_PURE_PYTHON=1``
forces the numpy fallback.  Both expose ``sphere_sphere``, ``sphere_box``,
``hildreth`` and ``fk_chain`` with identical semantics.
"""
import os

from . import _fallback

if os.environ.get("SAFEGUARD_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
else:
    try:
        from . import _core as _impl
    except ImportError:  # extension not built
        _impl = _fallback

BACKEND = _impl.BACKEND
sphere_sphere = _impl.sphere_sphere
sphere_box = _impl.sphere_box
hildreth = _impl.hildreth
fk_chain = _impl.fk_chain


def backends():
    """Return every importable backend module, fallback first."""
    mods = [_fallback]
    try:
        from . import _core
    except ImportError:
        pass
    else:
        mods.append(_core)
    return mods
