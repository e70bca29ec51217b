"""Hot-kernel dispatch: compiled extension when available, NumPy fallback
otherwise.

The active backend is chosen at import time (``SPGRFIT_BACKEND=python`` or
``=native`` forces a choice) and can be swapped with :func:`set_backend`,
which the benchmark and the backend-agreement tests use.
"""

import os

import numpy as np

from . import _python

BASIS_LOG = _python.BASIS_LOG
BASIS_RATE = _python.BASIS_RATE
BASIS_TIME = _python.BASIS_TIME
LOAD_ABS_DIAG = _python.LOAD_ABS_DIAG
LOAD_ABS_ROW_SUM = _python.LOAD_ABS_ROW_SUM

BASIS_CODES = {"log": BASIS_LOG, "rate": BASIS_RATE, "time": BASIS_TIME}
LOADING_CODES = {"abs_diag": LOAD_ABS_DIAG, "abs_row_sum": LOAD_ABS_ROW_SUM}

try:
    from . import _native
except ImportError:         # extension not built; NumPy path only
    _native = None

_requested = os.environ.get("SPGRFIT_BACKEND", "").strip().lower()
if _requested == "python":
    _impl = _python
elif _requested == "native":
    if _native is None:
        raise ImportError("SPGRFIT_BACKEND=native but the compiled "
                          "extension is not available")
    _impl = _native
else:
    _impl = _native if _native is not None else _python


def get_backend():
    """Name of the active backend, 'native' or 'python'."""
    return "native" if _impl is _native else "python"


def available_backends():
    names = ["python"]
    if _native is not None:
        names.insert(0, "native")
    return names


def set_backend(name):
    """Switch the active backend; returns the previous name."""
    global _impl
    prev = get_backend()
    if name == "python":
        _impl = _python
    elif name == "native":
        if _native is None:
            raise ValueError("native backend is not available")
        _impl = _native
    else:
        raise ValueError(f"unknown backend {name!r}")
    return prev


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def expand_protocol(n_voxels, flip, tr, te, sigma2, mt):
    """Broadcast per-echo metadata to the (N, I) layout the kernels use."""
    flip = np.atleast_2d(np.asarray(flip, dtype=np.float64))
    I = flip.shape[-1]
    shape = (n_voxels, I)

    def full(x, dtype=np.float64):
        return np.ascontiguousarray(
            np.broadcast_to(np.atleast_2d(np.asarray(x, dtype=dtype)), shape),
            dtype=dtype)

    return (full(flip), full(tr), full(te), full(sigma2),
            full(mt, dtype=np.uint8))


def spgr_signal(params, flip, tr, te, mt, b1p=None, b1m=None):
    return _impl.spgr_signal(_c(params), _c(flip), _c(tr), _c(te),
                             np.ascontiguousarray(mt, dtype=np.uint8),
                             None if b1p is None else _c(b1p),
                             None if b1m is None else _c(b1m))


def spgr_derivs(params, flip, tr, te, mt, b1p=None, b1m=None):
    return _impl.spgr_derivs(_c(params), _c(flip), _c(tr), _c(te),
                             np.ascontiguousarray(mt, dtype=np.uint8),
                             None if b1p is None else _c(b1p),
                             None if b1m is None else _c(b1m))


def spgr_nll(coords, obs, flip, tr, te, sigma2, mt, b1p=None, b1m=None,
             basis=BASIS_LOG):
    return _impl.spgr_nll(_c(coords), _c(obs), _c(flip), _c(tr), _c(te),
                          _c(sigma2),
                          np.ascontiguousarray(mt, dtype=np.uint8),
                          None if b1p is None else _c(b1p),
                          None if b1m is None else _c(b1m), basis)


def spgr_system(coords, obs, flip, tr, te, sigma2, mt, b1p=None, b1m=None,
                basis=BASIS_LOG, loading=LOAD_ABS_DIAG):
    return _impl.spgr_system(_c(coords), _c(obs), _c(flip), _c(tr), _c(te),
                             _c(sigma2),
                             np.ascontiguousarray(mt, dtype=np.uint8),
                             None if b1p is None else _c(b1p),
                             None if b1m is None else _c(b1m),
                             basis, loading)


def membrane_apply(y, w, lam, voxel_size):
    return _impl.membrane_apply(_c(y), _c(w), _c(lam), _c(voxel_size))


def membrane_diag(w, lam, voxel_size):
    return _impl.membrane_diag(_c(w), _c(lam), _c(voxel_size))


def pull_affine(vol, mat, oshape):
    return _impl.pull_affine(_c(vol), _c(mat), tuple(int(v) for v in oshape))


def push_affine(vol, mat, oshape, sdims, mask=None):
    return _impl.push_affine(_c(vol), _c(mat), tuple(int(v) for v in oshape),
                             tuple(int(v) for v in sdims),
                             None if mask is None else
                             np.ascontiguousarray(mask, dtype=bool))
