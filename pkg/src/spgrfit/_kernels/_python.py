"""Pure NumPy implementation of the hot kernels.

Mirrors the compiled extension in ``_native.pyx``; selected at import time
by the package ``__init__`` when the extension is unavailable (or forced
via ``SPGRFIT_BACKEND=python``).

Conventions shared by both backends:

* ``params`` / ``coords`` are (N, 4) float64.  In the log basis the four
  channels are (a_log, r1_log, r2_log, mt_logit).  In the rate and time
  bases they are the natural values (A, R1, R2*, delta) or
  (A, T1, T2*, delta), treated as free reals so that candidate points
  outside the positive orthant still evaluate algebraically.
* Echo metadata ``flip, tr, te, sigma2`` are (N, I) float64 and ``mt`` is
  (N, I) uint8; ``b1p`` / ``b1m`` are (N, I) float64 or None.
* Volumes are C-contiguous float64, channel axis first.
"""

import numpy as np

BASIS_LOG, BASIS_RATE, BASIS_TIME = 0, 1, 2
LOAD_ABS_DIAG, LOAD_ABS_ROW_SUM = 0, 1


# ---------------------------------------------------------------------------
# SPGR forward model
# ---------------------------------------------------------------------------

def _log_pieces(params, flip, tr, te, mt, b1p, b1m):
    """Signal and log-basis first/second derivative factors, stable in the
    extreme corners of the sampling ranges (expm1 for 1-E, additive split
    of 1 - beta*E)."""
    with np.errstate(over="ignore", under="ignore", invalid="ignore",
                     divide="ignore"):
        a = np.exp(params[:, 0:1])
        r1 = np.exp(params[:, 1:2])
        r2 = np.exp(params[:, 2:3])
        delta = np.where(mt != 0,
                         1.0 / (1.0 + np.exp(-params[:, 3:4])), 0.0)
        alpha = flip if b1p is None else flip * b1p
        cosa = np.cos(alpha)
        sina = np.sin(alpha)
        z1 = r1 * tr
        E = np.exp(-z1)
        onemE = -np.expm1(-z1)
        beta = (1.0 - delta) * cosa
        # 1 - beta*E = (1-beta) + beta*(1-E); 1-beta = 2 sin^2(a/2) + d cos a
        onembE = 2.0 * np.sin(alpha / 2.0) ** 2 + delta * cosa + beta * onemE
        z2 = r2 * te
        s = a * sina * (1.0 - delta) * onemE / onembE * np.exp(-z2)
        if b1m is not None:
            s = s * b1m
        ok = (onemE > 0.0) & (E > 0.0)
        g1 = np.where(ok, z1 * (1.0 - beta) * E / (onembE * onemE) * s, 0.0)
        h1 = np.where(ok, (1.0 - z1 * (1.0 + beta * E) / onembE) * g1, 0.0)
        g2 = -z2 * s
        h2 = (1.0 - z2) * g2
        g3 = -delta * s / onembE
        h3 = (2.0 * (1.0 - delta) * (1.0 - cosa * E) / onembE - 1.0) * g3
    return s, (s, g1, g2, g3), (s, h1, h2, h3), z2


def spgr_signal(params, flip, tr, te, mt, b1p=None, b1m=None):
    """Predicted SPGR intensities, (N, I), from log-basis parameters."""
    s, _, _, _ = _log_pieces(params, flip, tr, te, mt, b1p, b1m)
    return s


def spgr_derivs(params, flip, tr, te, mt, b1p=None, b1m=None):
    """Signal, gradient and diagonal second derivatives w.r.t. the
    log-basis parameters; each (N, I) resp. (N, I, 4)."""
    s, g, h, _ = _log_pieces(params, flip, tr, te, mt, b1p, b1m)
    return s, np.stack(g, axis=-1), np.stack(h, axis=-1)


def _natural_pieces(coords, flip, tr, te, mt, b1p, b1m, basis):
    """Signal and derivative factors w.r.t. natural (rate or time) basis
    coordinates, valid on all of R^4 (negative rates grow, they do not
    raise)."""
    with np.errstate(over="ignore", under="ignore", invalid="ignore",
                     divide="ignore"):
        A = coords[:, 0:1]
        if basis == BASIS_RATE:
            R1 = coords[:, 1:2]
            R2 = coords[:, 2:3]
        else:
            R1 = 1.0 / coords[:, 1:2]
            R2 = 1.0 / coords[:, 2:3]
        delta = np.where(mt != 0, coords[:, 3:4], 0.0)
        alpha = flip if b1p is None else flip * b1p
        cosa = np.cos(alpha)
        sina = np.sin(alpha)
        z1 = R1 * tr
        E = np.exp(-z1)
        onemE = -np.expm1(-z1)
        beta = (1.0 - delta) * cosa
        onembE = 2.0 * np.sin(alpha / 2.0) ** 2 + delta * cosa + beta * onemE
        D = np.exp(-R2 * te)
        scale = sina * D if b1m is None else sina * D * b1m
        v = 1.0 - delta
        snoA = scale * v * onemE / onembE
        s = A * snoA
        dR1noA = scale * v * (1.0 - beta) * tr * E / onembE ** 2
        dR1 = A * dR1noA
        d2R1 = -A * scale * v * (1.0 - beta) * tr * tr * E * (1.0 + beta * E) / onembE ** 3
        dR2noA = -te * snoA
        dR2 = -te * s
        d2R2 = te * te * s
        dDnoA = np.where(mt != 0, -scale * onemE / onembE ** 2, 0.0)
        dD = A * dDnoA
        d2D = np.where(mt != 0, 2.0 * cosa * E * s / (v * onembE ** 2), 0.0)
        # mixed second derivatives expressible through first derivatives
        m12 = np.abs(te * dR1)      # |d2s/dR1 dR2|
        m23 = np.abs(te * dD)       # |d2s/dR2 ddelta|
        if basis == BASIS_TIME:
            T1 = coords[:, 1:2]
            T2 = coords[:, 2:3]
            iT1sq = 1.0 / (T1 * T1)
            iT2sq = 1.0 / (T2 * T2)
            d2R1 = d2R1 * iT1sq * iT1sq + dR1 * 2.0 / (T1 * T1 * T1)
            dR1 = -dR1 * iT1sq
            dR1noA = -dR1noA * iT1sq
            d2R2 = d2R2 * iT2sq * iT2sq + dR2 * 2.0 / (T2 * T2 * T2)
            dR2 = -dR2 * iT2sq
            dR2noA = -dR2noA * iT2sq
            m12 = m12 * np.abs(iT1sq * iT2sq)
            m23 = m23 * np.abs(iT2sq)
    firsts = (snoA, dR1, dR2, dD)
    seconds = (np.zeros_like(s), d2R1, d2R2, d2D)
    mixed = (np.abs(dR1noA), np.abs(dR2noA), np.abs(dDnoA), m12, m23)
    return s, firsts, seconds, mixed


def spgr_nll(coords, obs, flip, tr, te, sigma2, mt, b1p=None, b1m=None,
             basis=BASIS_LOG):
    """Half sum of squared residuals weighted by 1/sigma^2, (N,)."""
    if basis == BASIS_LOG:
        s, _, _, _ = _log_pieces(coords, flip, tr, te, mt, b1p, b1m)
    else:
        s = _natural_pieces(coords, flip, tr, te, mt, b1p, b1m, basis)[0]
    with np.errstate(over="ignore", invalid="ignore"):
        r = s - obs
        return 0.5 * np.sum(r * r / sigma2, axis=1)


def spgr_system(coords, obs, flip, tr, te, sigma2, mt, b1p=None, b1m=None,
                basis=BASIS_LOG, loading=LOAD_ABS_DIAG):
    """Objective, gradient and loaded preconditioner of the SPGR least
    squares problem for a batch of voxels.

    Returns (nll (N,), grad (N, 4), precond (N, 4, 4)).  The
    preconditioner is the Fisher term plus an absolute residual-weighted
    diagonal loading; ``loading`` selects between the absolute diagonal of
    the per-observation Hessian and its absolute row sums (the latter
    built from the closed-form entries expressible through first
    derivatives; the (r1, delta) cross term has no such expression and is
    omitted).
    """
    N = coords.shape[0]
    with np.errstate(over="ignore", under="ignore", invalid="ignore",
                     divide="ignore"):
        if basis == BASIS_LOG:
            s, firsts, seconds, z2 = _log_pieces(coords, flip, tr, te, mt,
                                                 b1p, b1m)
            gs = np.stack(firsts, axis=-1)
            hd = np.stack(seconds, axis=-1)
            if loading == LOAD_ABS_DIAG:
                rows = np.abs(hd)
            else:
                a0 = np.abs(s)
                a1 = np.abs(firsts[1])
                a2 = np.abs(firsts[2])
                a3 = np.abs(firsts[3])
                m12 = a1 * np.abs(z2)
                m23 = a3 * np.abs(z2)
                rows = np.stack([
                    a0 + a1 + a2 + a3,
                    np.abs(hd[..., 1]) + a1 + m12,
                    np.abs(hd[..., 2]) + a2 + m12 + m23,
                    np.abs(hd[..., 3]) + a3 + m23,
                ], axis=-1)
        else:
            s, firsts, seconds, mixed = _natural_pieces(
                coords, flip, tr, te, mt, b1p, b1m, basis)
            gs = np.stack(firsts, axis=-1)
            hd = np.stack(seconds, axis=-1)
            if loading == LOAD_ABS_DIAG:
                rows = np.abs(hd)
            else:
                m01, m02, m03, m12, m23 = mixed
                rows = np.stack([
                    m01 + m02 + m03,
                    np.abs(hd[..., 1]) + m01 + m12,
                    np.abs(hd[..., 2]) + m02 + m12 + m23,
                    np.abs(hd[..., 3]) + m03 + m23,
                ], axis=-1)
        r = s - obs
        w = 1.0 / sigma2
        nll = 0.5 * np.sum(r * r * w, axis=1)
        grad = np.einsum("ni,nik->nk", r * w, gs)
        precond = np.einsum("nik,nil,ni->nkl", gs, gs, w)
        load = np.einsum("ni,nik->nk", np.abs(r) * w, rows)
        idx = np.arange(4)
        precond[:, idx, idx] += load
    return nll, grad, precond


# ---------------------------------------------------------------------------
# Weighted membrane (JTV quadratic bound) stencils
# ---------------------------------------------------------------------------

def membrane_apply(y, w, lam, voxel_size):
    """Apply the weighted second-difference operator channelwise.

    Computes ``lam_k * (G^T W G) y_k`` where G stacks the 6 forward and
    backward differences about every voxel (scaled by voxel size) and W
    carries the per-voxel weights; realised as a 6-neighbour stencil with
    replicate (Neumann) boundaries, never as an assembled matrix.
    """
    y = np.asarray(y)
    out = np.zeros_like(y)
    for axis in range(3):
        iv = 1.0 / float(voxel_size[axis]) ** 2
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        wpair = (w[lo] + w[hi]) * iv
        d = y[(slice(None),) + lo] - y[(slice(None),) + hi]
        contrib = wpair[None] * d
        out[(slice(None),) + lo] += contrib
        out[(slice(None),) + hi] -= contrib
    return out * np.asarray(lam, dtype=float)[:, None, None, None]


def membrane_diag(w, lam, voxel_size):
    """Diagonal of the weighted membrane operator per channel — the
    'cross kernel' convolution of the weight map."""
    d = np.zeros_like(w)
    for axis in range(3):
        iv = 1.0 / float(voxel_size[axis]) ** 2
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        s = (w[lo] + w[hi]) * iv
        d[lo] += s
        d[hi] += s
    return np.asarray(lam, dtype=float)[:, None, None, None] * d[None]


# ---------------------------------------------------------------------------
# Trilinear pull / push between grids
# ---------------------------------------------------------------------------

def _corner_data(mat, oshape, sdims):
    ii, jj, kk = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in oshape),
                             indexing="ij")
    x = mat[0, 0] * ii + mat[0, 1] * jj + mat[0, 2] * kk + mat[0, 3]
    y = mat[1, 0] * ii + mat[1, 1] * jj + mat[1, 2] * kk + mat[1, 3]
    z = mat[2, 0] * ii + mat[2, 1] * jj + mat[2, 2] * kk + mat[2, 3]
    nx, ny, nz = sdims
    valid = ((x >= 0) & (x <= nx - 1) & (y >= 0) & (y <= ny - 1)
             & (z >= 0) & (z <= nz - 1))
    x = np.where(valid, x, 0.0)
    y = np.where(valid, y, 0.0)
    z = np.where(valid, z, 0.0)
    i0 = np.minimum(np.floor(x), max(nx - 2, 0)).astype(np.intp)
    j0 = np.minimum(np.floor(y), max(ny - 2, 0)).astype(np.intp)
    k0 = np.minimum(np.floor(z), max(nz - 2, 0)).astype(np.intp)
    fx = x - i0
    fy = y - j0
    fz = z - k0
    corners = []
    for di in (0, 1):
        wx = 1.0 - fx if di == 0 else fx
        i = np.minimum(i0 + di, nx - 1)
        for dj in (0, 1):
            wy = 1.0 - fy if dj == 0 else fy
            j = np.minimum(j0 + dj, ny - 1)
            for dk in (0, 1):
                wz = 1.0 - fz if dk == 0 else fz
                k = np.minimum(k0 + dk, nz - 1)
                wgt = wx * wy * wz * valid
                flat = (i * ny + j) * nz + k
                corners.append((flat.ravel(), wgt.ravel()))
    return corners, valid


def pull_affine(vol, mat, oshape):
    """Trilinear resample of (C, *sdims) onto a grid of shape ``oshape``;
    ``mat`` is the 3x4 map from output voxel index to input voxel coords.

    Returns (out (C, *oshape), mask (oshape) bool); out-of-field samples
    are zero with mask False.
    """
    vol = np.ascontiguousarray(vol, dtype=np.float64)
    C = vol.shape[0]
    sdims = vol.shape[1:]
    oshape = tuple(int(n) for n in oshape)
    corners, valid = _corner_data(np.asarray(mat, dtype=np.float64),
                                  oshape, sdims)
    flat_vol = vol.reshape(C, -1)
    out = np.zeros((C, int(np.prod(oshape))))
    for flat, wgt in corners:
        out += flat_vol[:, flat] * wgt[None]
    return out.reshape((C,) + oshape), valid


def push_affine(vol, mat, oshape, sdims, mask=None):
    """Exact adjoint of :func:`pull_affine`: scatter (C, *oshape) into a
    (C, *sdims) volume with the same weights; ``mask`` restricts which
    output-grid voxels contribute."""
    vol = np.ascontiguousarray(vol, dtype=np.float64)
    C = vol.shape[0]
    oshape = tuple(int(n) for n in oshape)
    sdims = tuple(int(n) for n in sdims)
    corners, valid = _corner_data(np.asarray(mat, dtype=np.float64),
                                  oshape, sdims)
    vals = vol.reshape(C, -1)
    if mask is not None:
        vals = vals * np.asarray(mask, dtype=np.float64).ravel()[None]
    out = np.zeros((C, int(np.prod(sdims))))
    for flat, wgt in corners:
        contrib = vals * wgt[None]
        for c in range(C):
            np.add.at(out[c], flat, contrib[c])
    return out.reshape((C,) + sdims)
