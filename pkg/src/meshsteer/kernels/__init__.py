"""Hot per-element kernels, compiled extension with pure-numpy fallback.

Set ``MESHSTEER_PURE=1`` to force the fallback even when the extension is
built (used by the kernel-equivalence tests and the benchmark).
"""

import os

if os.environ.get("MESHSTEER_PURE") == "1":
    from . import _fallback as _impl
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _fallback as _impl

from . import _fallback as fallback

COMPILED = _impl.COMPILED
tet_volumes = _impl.tet_volumes
scaled_jacobians = _impl.scaled_jacobians
tet_stiffness_triplets = _impl.tet_stiffness_triplets
elastic_stiffness_triplets = _impl.elastic_stiffness_triplets
triangle_areas = _impl.triangle_areas
cotan_triplets = _impl.cotan_triplets
