"""Exponential least-squares toy problems with exact optima.

Four problems probe the behaviour of Newton-like steps on non-convex
least-squares landscapes typical of relaxometry:

* ``exp1d``          l(y) = (e^-y - x)^2 / 2
* ``nested_exp1d``   l(y) = (e^-e^y - x)^2 / 2
* ``exp2d``          l(y,z) = sum_i (x_i - e^(z - t_i y))^2 / 2
* ``nested_exp2d``   l(y,z) = sum_i (x_i - e^(z - t_i e^y))^2 / 2

Each evaluation returns the true Hessian alongside three positive
preconditioners: Gauss-Newton (squared gradients of the model), the
proposed variant that keeps the absolute diagonal of the residual-weighted
model Hessian, and the row-sum variant ('plus') that is guaranteed to
majorise the true Hessian.  In 1D the two proposed variants coincide.

A Newton-like step -g/p never overshoots past the optimum when the
monotonic-convergence bound |g|/p <= |y - y*| holds; the sweep helpers
below check it pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ToyProblem", "ToyEval", "toy_eval", "toy_optimum", "toy_iterate",
           "monotonic_condition", "condition_sweep_1d", "sample_points_2d",
           "condition_sweep_2d", "PRECONDITIONERS", "KINDS_1D", "KINDS_2D"]

KINDS_1D = ("exp1d", "nested_exp1d")
KINDS_2D = ("exp2d", "nested_exp2d")
PRECONDITIONERS = ("newton", "gn", "proposed", "proposed_plus")

# divergence guard: e^y overflows past this in double precision
DIVERGE_LIMIT = 700.0


@dataclass
class ToyProblem:
    """kind plus observed data: x > 0 for the 1D kinds, (x0, x1, t0, t1)
    with t0 != t1 for the 2D kinds."""

    kind: str
    data: tuple

    def __post_init__(self):
        if self.kind in KINDS_1D:
            x = float(np.ravel(self.data)[0])
            if x <= 0:
                raise ValueError("1D toy problems need x > 0")
            self.data = (x,)
        elif self.kind in KINDS_2D:
            x0, x1, t0, t1 = (float(v) for v in self.data)
            if x0 <= 0 or x1 <= 0:
                raise ValueError("2D toy problems need positive observations")
            if t0 == t1:
                raise ValueError("2D toy problems need distinct t values")
            self.data = (x0, x1, t0, t1)
        else:
            raise ValueError(f"unknown toy kind {self.kind!r}")


@dataclass
class ToyEval:
    l: object
    g: object
    h_newton: object
    p_gn: object
    p_proposed: object
    p_proposed_plus: object


def _eval_1d(kind, x, y):
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        if kind == "exp1d":
            f = np.exp(-y)
            fp = -f
            fpp = f
        else:
            ey = np.exp(y)
            f = np.exp(-ey)
            fp = -ey * f
            fpp = (ey * ey - ey) * f
        r = f - x
        l = 0.5 * r * r
        g = r * fp
        h = fp * fp + r * fpp
        p = fp * fp
        pt = fp * fp + np.abs(r * fpp)
    return l, g, h, p, pt


def _eval_2d(kind, data, y, z):
    """Vectorised over leading dims of y/z; data entries may broadcast."""
    x0, x1, t0, t1 = (np.asarray(v, dtype=float) for v in data)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        if kind == "exp2d":
            inner = y
            dinner = np.ones_like(y)
            d2inner = np.zeros_like(y)
        else:
            inner = np.exp(y)
            dinner = inner
            d2inner = inner
        l = np.zeros(np.broadcast(y, z).shape)
        g = np.zeros(l.shape + (2,))
        H = np.zeros(l.shape + (2, 2))
        GN = np.zeros_like(H)
        Dab = np.zeros(l.shape + (2,))
        Drs = np.zeros(l.shape + (2,))
        for xi, ti in ((x0, t0), (x1, t1)):
            f = np.exp(z - ti * inner)
            r = f - xi
            gy = -ti * dinner * f
            gz = f
            hyy = (ti * ti * dinner * dinner - ti * d2inner) * f
            hyz = -ti * dinner * f
            hzz = f
            l += 0.5 * r * r
            g[..., 0] += r * gy
            g[..., 1] += r * gz
            GN[..., 0, 0] += gy * gy
            GN[..., 0, 1] += gy * gz
            GN[..., 1, 1] += gz * gz
            H[..., 0, 0] += r * hyy
            H[..., 0, 1] += r * hyz
            H[..., 1, 1] += r * hzz
            ar = np.abs(r)
            Dab[..., 0] += ar * np.abs(hyy)
            Dab[..., 1] += ar * np.abs(hzz)
            Drs[..., 0] += ar * (np.abs(hyy) + np.abs(hyz))
            Drs[..., 1] += ar * (np.abs(hzz) + np.abs(hyz))
        GN[..., 1, 0] = GN[..., 0, 1]
        H[..., 1, 0] = H[..., 0, 1]
        H += GN
        Pp = GN.copy()
        Pp[..., 0, 0] += Dab[..., 0]
        Pp[..., 1, 1] += Dab[..., 1]
        Ppp = GN.copy()
        Ppp[..., 0, 0] += Drs[..., 0]
        Ppp[..., 1, 1] += Drs[..., 1]
    return l, g, H, GN, Pp, Ppp


def toy_eval(prob: ToyProblem, point) -> ToyEval:
    """Objective, gradient, true Hessian and the three preconditioners at
    ``point`` (scalar for 1D kinds, length-2 for 2D kinds)."""
    if prob.kind in KINDS_1D:
        l, g, h, p, pt = _eval_1d(prob.kind, prob.data[0], point)
        return ToyEval(l, g, h, p, pt, pt)
    y, z = np.asarray(point, dtype=float)[..., 0], np.asarray(point, dtype=float)[..., 1]
    l, g, H, GN, Pp, Ppp = _eval_2d(prob.kind, prob.data, y, z)
    return ToyEval(l, g, H, GN, Pp, Ppp)


def _closed_form_2d(kind, data):
    x0, x1, t0, t1 = data
    ly = (np.log(x0) - np.log(x1)) / (t1 - t0)
    z = np.log(x0) + t0 * ly
    if kind == "exp2d":
        return np.array([ly, z])
    if ly <= 0:
        return None
    return np.array([np.log(ly), z])


def toy_optimum(prob: ToyProblem, max_iter: int = 500, grad_tol: float = 1e-12):
    """Location of the minimum.

    1D kinds have closed forms (y* = -log x; y* = log(-log x), the latter
    only for x in (0,1)).  2D optima are pre-solved numerically with the
    row-sum preconditioner from the noise-free closed-form interpolant.
    """
    if prob.kind == "exp1d":
        return -np.log(prob.data[0])
    if prob.kind == "nested_exp1d":
        x = prob.data[0]
        if not 0.0 < x < 1.0:
            raise ValueError("nested_exp1d optimum needs x in (0, 1)")
        return np.log(-np.log(x))
    start = _closed_form_2d(prob.kind, prob.data)
    if start is None:
        raise ValueError("no admissible optimum for this dataset")
    pt = start.copy()
    for _ in range(max_iter):
        _, g, _, _, _, Ppp = _eval_2d(prob.kind, prob.data, pt[0], pt[1])
        if not np.all(np.isfinite(g)):
            raise ValueError("optimum pre-solve diverged")
        if np.abs(g).max() < grad_tol:
            return pt
        pt = pt - np.linalg.solve(Ppp, g)
    raise ValueError("optimum pre-solve did not reach gradient tolerance")


def _step(prob, point, preconditioner):
    ev = toy_eval(prob, point)
    if prob.kind in KINDS_1D:
        p = {"newton": ev.h_newton, "gn": ev.p_gn, "proposed": ev.p_proposed,
             "proposed_plus": ev.p_proposed_plus}[preconditioner]
        g = ev.g
        if p == 0.0:
            return 0.0 if g == 0.0 else np.inf
        return g / p
    P = {"newton": ev.h_newton, "gn": ev.p_gn, "proposed": ev.p_proposed,
         "proposed_plus": ev.p_proposed_plus}[preconditioner]
    try:
        return np.linalg.solve(P, ev.g)
    except np.linalg.LinAlgError:
        return np.full(2, np.inf)


def toy_iterate(prob: ToyProblem, y0, preconditioner: str, n_iters: int):
    """Apply ``y <- y - g/p`` repeatedly, recording the full trajectory.

    Returns (points, objectives, diverged); the trajectory is truncated
    with ``diverged=True`` when the objective stops being finite or the
    iterate leaves the double-precision exp range.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    pt = np.asarray(y0, dtype=float)
    scalar = prob.kind in KINDS_1D
    points = [pt.item() if scalar else pt.copy()]
    objectives = [float(np.asarray(toy_eval(prob, pt).l))]
    diverged = False
    for _ in range(n_iters):
        pt = pt - _step(prob, pt, preconditioner)
        lval = float(np.asarray(toy_eval(prob, pt).l))
        points.append(pt.item() if scalar else pt.copy())
        objectives.append(lval)
        if not np.isfinite(lval) or np.max(np.abs(pt)) > DIVERGE_LIMIT:
            diverged = True
            break
    return np.asarray(points), np.asarray(objectives), diverged


def monotonic_condition(prob: ToyProblem, point, preconditioner: str,
                        optimum=None):
    """Step magnitude versus the distance to the optimum.

    Returns (step, bound, satisfied) where the step is |g|/p (1D) or
    ||P^-1 g|| (2D) and the bound |y - y*| resp. ||y - y*||; a zero
    gradient counts as a zero step regardless of the preconditioner
    (flat-region underflow).  Comparison allows a 1e-9 relative slack for
    the points arbitrarily close to the optimum where both sides vanish.
    """
    star = toy_optimum(prob) if optimum is None else optimum
    s = _step(prob, point, preconditioner)
    if prob.kind in KINDS_1D:
        step = abs(s)
        bound = abs(float(point) - float(star))
    else:
        step = float(np.linalg.norm(s))
        bound = float(np.linalg.norm(np.asarray(point, dtype=float) - star))
    satisfied = bool(step <= bound + 1e-12 + 1e-9 * bound)
    return step, bound, satisfied


# ---------------------------------------------------------------------------
# Vectorised sweeps (experiment drivers and acceptance)
# ---------------------------------------------------------------------------

def condition_sweep_1d(kind, x, ys, preconditioner):
    """Condition check on a grid of points for one 1D dataset; returns
    (steps, bounds, satisfied) arrays."""
    prob = ToyProblem(kind, (x,))
    star = toy_optimum(prob)
    l, g, h, p, pt = _eval_1d(kind, x, np.asarray(ys, dtype=float))
    q = {"newton": h, "gn": p, "proposed": pt, "proposed_plus": pt}[preconditioner]
    with np.errstate(divide="ignore", invalid="ignore"):
        steps = np.where(g == 0.0, 0.0, np.abs(g) / q)
    bounds = np.abs(np.asarray(ys, dtype=float) - star)
    satisfied = steps <= bounds + 1e-12 + 1e-9 * bounds
    return steps, bounds, satisfied


def sample_points_2d(kind, n, rng, noise=0.2, t_range=(0.25, 2.0),
                     t_min_sep=0.5, data_range=(-2.0, 2.0), window=3.0,
                     max_presolve=500):
    """Random (dataset, point, optimum) triples for the 2D condition sweep.

    Datasets are generated from a model point with multiplicative
    log-normal noise; optima are pre-solved with the row-sum
    preconditioner; evaluation points are drawn uniformly in a window
    around each optimum.  Returns dict of arrays.
    """
    x0 = np.empty(n); x1 = np.empty(n); t0 = np.empty(n); t1 = np.empty(n)
    stars = np.empty((n, 2))
    filled = 0
    while filled < n:
        m = n - filled
        ta = rng.uniform(*t_range, size=m)
        tb = rng.uniform(*t_range, size=m)
        lo, hi = np.minimum(ta, tb), np.maximum(ta, tb)
        ys = rng.uniform(*data_range, size=m)
        zs = rng.uniform(*data_range, size=m)
        inner = ys if kind == "exp2d" else np.exp(ys)
        a0 = np.exp(zs - lo * inner + noise * rng.standard_normal(m))
        a1 = np.exp(zs - hi * inner + noise * rng.standard_normal(m))
        ok = hi - lo >= t_min_sep
        if kind == "nested_exp2d":
            with np.errstate(invalid="ignore", divide="ignore"):
                ok &= (np.log(a0) - np.log(a1)) / (hi - lo) > 0
        k = int(ok.sum())
        sl = slice(filled, filled + k)
        x0[sl], x1[sl] = a0[ok], a1[ok]
        t0[sl], t1[sl] = lo[ok], hi[ok]
        filled += k
    # batch pre-solve of the optima
    ly = (np.log(x0) - np.log(x1)) / (t1 - t0)
    z = np.log(x0) + t0 * ly
    y = ly if kind == "exp2d" else np.log(ly)
    pts = np.stack([y, z], axis=-1)
    data = (x0, x1, t0, t1)
    for _ in range(max_presolve):
        _, g, _, _, _, Ppp = _eval_2d(kind, data, pts[:, 0], pts[:, 1])
        gn = np.abs(g).max(axis=-1)
        live = gn >= 1e-13
        if not live.any():
            break
        sol = np.linalg.solve(Ppp[live], g[live][..., None])[..., 0]
        pts[live] -= sol
    _, g, _, _, _, _ = _eval_2d(kind, data, pts[:, 0], pts[:, 1])
    solved = np.abs(g).max(axis=-1) < 1e-10
    stars = pts
    points = stars + rng.uniform(-window, window, size=(n, 2))
    return dict(x0=x0, x1=x1, t0=t0, t1=t1, star=stars, point=points,
                solved=solved)


def condition_sweep_2d(kind, samples, preconditioner):
    """Condition check over pre-sampled 2D problems; returns
    (steps, bounds, satisfied, next_objective_gap)."""
    data = (samples["x0"], samples["x1"], samples["t0"], samples["t1"])
    pts = samples["point"]
    l, g, H, GN, Pp, Ppp = _eval_2d(kind, data, pts[:, 0], pts[:, 1])
    P = {"newton": H, "gn": GN, "proposed": Pp, "proposed_plus": Ppp}[preconditioner]
    sol = np.linalg.solve(P, g[..., None])[..., 0]
    steps = np.linalg.norm(sol, axis=-1)
    bounds = np.linalg.norm(pts - samples["star"], axis=-1)
    satisfied = steps <= bounds + 1e-12 + 1e-9 * bounds
    nxt = pts - sol
    l2 = _eval_2d(kind, data, nxt[:, 0], nxt[:, 1])[0]
    return steps, bounds, satisfied, l2 - l
