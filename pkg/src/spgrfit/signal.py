"""SPGR forward model and its derivatives with respect to the encoded
parameters, plus the per-voxel least-squares objective.

The steady-state intensity of one spoiled gradient echo is

    s = b1m * a * sin(alpha) * (1-d)(1 - E) / (1 - (1-d) cos(alpha) E) * exp(-r2 te)

with E = exp(-r1 tr), alpha the effective flip angle (nominal angle times
the transmit modulation) and d the saturation fraction of an MT-weighted
contrast (0 otherwise).  Gradients and the diagonal second derivatives
w.r.t. (a_log, r1_log, r2_log, mt_logit) have closed forms; notably
ds/da_log equals s itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import EchoSpec, LogParams

__all__ = ["SignalDerivs", "spgr_signal", "spgr_derivs", "voxel_objective",
           "signal_batch", "system_batch", "nll_batch"]


@dataclass
class SignalDerivs:
    """Predicted intensity with first and diagonal second derivatives."""

    s: float
    grad: np.ndarray       # (4,)
    hess_diag: np.ndarray  # (4,)


def _echo_arrays(p, echoes_and_mods):
    params = np.asarray(p.as_array(), dtype=np.float64)[None]
    flip, tr, te, sigma2, mt, b1p, b1m = [], [], [], [], [], [], []
    for e, b1p_i, b1m_i in echoes_and_mods:
        a_eff = e.flip_angle * b1p_i
        if not 0.0 < a_eff < math.pi:
            raise ValueError(f"effective flip angle must be in (0, pi), got {a_eff}")
        flip.append(e.flip_angle)
        tr.append(e.tr)
        te.append(e.te)
        sigma2.append(e.sigma2)
        mt.append(1 if e.has_mt_pulse else 0)
        b1p.append(b1p_i)
        b1m.append(b1m_i)
    arr = lambda x: np.asarray([x], dtype=np.float64)
    return (params, arr(flip), arr(tr), arr(te), arr(sigma2),
            np.asarray([mt], dtype=np.uint8), arr(b1p), arr(b1m))


def spgr_signal(p: LogParams, e: EchoSpec, b1p: float = 1.0,
                b1m: float = 1.0) -> float:
    """Predicted intensity of one echo; > 0 on the valid domain."""
    params, flip, tr, te, _, mt, b1pa, b1ma = _echo_arrays(p, [(e, b1p, b1m)])
    return float(K.spgr_signal(params, flip, tr, te, mt, b1pa, b1ma)[0, 0])


def spgr_derivs(p: LogParams, e: EchoSpec, b1p: float = 1.0,
                b1m: float = 1.0) -> SignalDerivs:
    """Signal plus gradient and diagonal Hessian w.r.t. the encoded
    parameters.  For a non-MT echo the mt_logit entries are exactly 0."""
    params, flip, tr, te, _, mt, b1pa, b1ma = _echo_arrays(p, [(e, b1p, b1m)])
    s, ds, d2s = K.spgr_derivs(params, flip, tr, te, mt, b1pa, b1ma)
    return SignalDerivs(float(s[0, 0]), ds[0, 0].copy(), d2s[0, 0].copy())


def voxel_objective(p: LogParams, data, loading: str = "abs_diag"):
    """Objective, gradient and loaded preconditioner of one voxel.

    Parameters
    ----------
    p : LogParams
    data : sequence of (EchoSpec, observed intensity, b1p, b1m) tuples;
        (EchoSpec, x) pairs are accepted and take unit modulations.
    loading : 'abs_diag' or 'abs_row_sum'
        How the residual-weighted absolute Hessian of the signal loads the
        diagonal of the preconditioner.

    Returns
    -------
    (nll, grad, precond) : float, (4,), (4, 4)
        nll = sum_i (x_i - s_i)^2 / (2 sigma_i^2); precond is symmetric
        positive semidefinite by construction.
    """
    if not data:
        raise ValueError("need at least one echo")
    norm = []
    obs = []
    for item in data:
        if len(item) == 2:
            e, x = item
            norm.append((e, 1.0, 1.0))
        else:
            e, x, b1p, b1m = item
            norm.append((e, b1p, b1m))
        obs.append(x)
    params, flip, tr, te, sigma2, mt, b1pa, b1ma = _echo_arrays(p, norm)
    nll, g, P = K.spgr_system(params, np.asarray([obs], dtype=np.float64),
                              flip, tr, te, sigma2, mt, b1pa, b1ma,
                              K.BASIS_LOG, K.LOADING_CODES[loading])
    return float(nll[0]), g[0].copy(), P[0].copy()


# ---------------------------------------------------------------------------
# Batch entry points used by the volume and ensemble drivers
# ---------------------------------------------------------------------------

def signal_batch(params, flip, tr, te, mt, b1p=None, b1m=None):
    """Signals (N, I) for (N, 4) log-basis parameters; metadata may be
    (I,) shared or (N, I) per voxel."""
    params = np.atleast_2d(np.asarray(params, dtype=np.float64))
    flip, tr, te, sigma2, mt8 = K.expand_protocol(
        params.shape[0], flip, tr, te, np.ones_like(np.asarray(te, float)), mt)
    return K.spgr_signal(params, flip, tr, te, mt8, b1p, b1m)


def system_batch(coords, obs, flip, tr, te, sigma2, mt, b1p=None, b1m=None,
                 basis="log", loading="abs_diag", freeze_mt=False):
    """(nll, grad, precond) over a voxel batch; ``freeze_mt`` pins the
    mt channel (zero gradient, unit diagonal) for datasets without any
    MT-weighted contrast so the 4x4 layout stays uniform."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    flip, tr, te, sigma2, mt8 = K.expand_protocol(coords.shape[0], flip, tr,
                                                  te, sigma2, mt)
    nll, g, P = K.spgr_system(coords, obs, flip, tr, te, sigma2, mt8,
                              b1p, b1m, K.BASIS_CODES[basis],
                              K.LOADING_CODES[loading])
    if freeze_mt:
        g[:, 3] = 0.0
        P[:, 3, :] = 0.0
        P[:, :, 3] = 0.0
        P[:, 3, 3] = 1.0
    return nll, g, P


def nll_batch(coords, obs, flip, tr, te, sigma2, mt, b1p=None, b1m=None,
              basis="log"):
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    flip, tr, te, sigma2, mt8 = K.expand_protocol(coords.shape[0], flip, tr,
                                                  te, sigma2, mt)
    return K.spgr_nll(coords, obs, flip, tr, te, sigma2, mt8, b1p, b1m,
                      K.BASIS_CODES[basis])
