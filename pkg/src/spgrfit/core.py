"""Domain types shared by all modules: parameter encodings, acquisition
metadata, volume containers and solver configuration.

Parameters are encoded on the real line: log for the signal amplitude and
the two relaxation rates, logit for the saturation fraction.  All angles
are radians, all times seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LogParams", "EchoSpec", "Contrast", "VolumeGrid", "ParameterMaps",
    "FitConfig", "FitReport", "to_natural", "from_natural",
    "CHANNEL_NAMES",
]

CHANNEL_NAMES = ("a_log", "r1_log", "r2_log", "mt_logit")


@dataclass(frozen=True)
class LogParams:
    """Per-voxel parameter 4-vector in encoded (unconstrained) space.

    Attributes
    ----------
    a_log : float
        Log of the signal amplitude (arbitrary signal units).
    r1_log : float
        Log of the longitudinal relaxation rate (log s^-1).
    r2_log : float
        Log of the apparent transverse relaxation rate (log s^-1).
    mt_logit : float
        Logit of the saturation fraction delta in (0, 1).
    """

    a_log: float
    r1_log: float
    r2_log: float
    mt_logit: float

    def __post_init__(self):
        for name in CHANNEL_NAMES:
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.a_log, self.r1_log, self.r2_log, self.mt_logit])

    @classmethod
    def from_array(cls, arr) -> "LogParams":
        a, r1, r2, d = np.asarray(arr, dtype=float).ravel()
        return cls(a, r1, r2, d)


def to_natural(p: LogParams):
    """Decode to natural space: (amplitude, r1, r2, delta).

    Componentwise exp for the first three channels and the logistic
    sigmoid for the fourth; total on finite inputs.
    """
    return (
        math.exp(p.a_log),
        math.exp(p.r1_log),
        math.exp(p.r2_log),
        1.0 / (1.0 + math.exp(-p.mt_logit)),
    )


def from_natural(a: float, r1: float, r2: float, delta: float) -> LogParams:
    """Encode natural-space values; exact inverse of :func:`to_natural`.

    Raises
    ------
    ValueError
        If any of a, r1, r2 is not strictly positive or delta is not
        strictly inside (0, 1).
    """
    if not (a > 0 and r1 > 0 and r2 > 0):
        raise ValueError(f"amplitude and rates must be > 0, got {(a, r1, r2)}")
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return LogParams(math.log(a), math.log(r1), math.log(r2),
                     math.log(delta) - math.log1p(-delta))


@dataclass
class EchoSpec:
    """Acquisition metadata of one echo.

    b1_plus / b1_minus are optional per-voxel modulation fields (transmit
    efficiency and net receive field); scalars are accepted and broadcast.
    """

    flip_angle: float          # radians
    tr: float                  # seconds
    te: float                  # seconds
    sigma2: float = 1.0        # noise variance, squared signal units
    has_mt_pulse: bool = False
    b1_plus: object = None
    b1_minus: object = None

    def __post_init__(self):
        if not 0.0 < self.flip_angle < math.pi:
            raise ValueError(f"flip angle must be in (0, pi), got {self.flip_angle}")
        if self.tr <= 0:
            raise ValueError(f"tr must be > 0, got {self.tr}")
        if self.te < 0:
            raise ValueError(f"te must be >= 0, got {self.te}")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")


@dataclass
class Contrast:
    """A group of echoes sharing flip angle, TR and MT-pulse status,
    together with one observed 3D volume per echo."""

    echoes: list
    volumes: list
    affine: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        if not self.echoes:
            raise ValueError("contrast needs at least one echo")
        e0 = self.echoes[0]
        for e in self.echoes[1:]:
            if (e.flip_angle != e0.flip_angle or e.tr != e0.tr
                    or e.has_mt_pulse != e0.has_mt_pulse):
                raise ValueError("echoes of one contrast must share "
                                 "flip angle, TR and MT-pulse status")
        if len(self.volumes) != len(self.echoes):
            raise ValueError("need exactly one volume per echo")
        shape = np.shape(self.volumes[0])
        for v in self.volumes[1:]:
            if np.shape(v) != shape:
                raise ValueError("echo volumes must share dimensions")
        self.affine = np.asarray(self.affine, dtype=float)
        if self.affine.shape != (4, 4):
            raise ValueError("affine must be 4x4")

    @property
    def flip_angle(self):
        return self.echoes[0].flip_angle

    @property
    def tr(self):
        return self.echoes[0].tr

    @property
    def has_mt_pulse(self):
        return self.echoes[0].has_mt_pulse

    @property
    def te(self):
        return np.array([e.te for e in self.echoes])

    @property
    def sigma2(self):
        return np.array([e.sigma2 for e in self.echoes])

    @property
    def shape(self):
        return np.shape(self.volumes[0])


@dataclass
class VolumeGrid:
    """3D lattice with voxel size (mm) and a 4x4 world orientation."""

    dims: tuple
    voxel_size: tuple = (1.0, 1.0, 1.0)
    affine: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be 3 positive ints, got {self.dims}")
        self.voxel_size = tuple(float(v) for v in self.voxel_size)
        if len(self.voxel_size) != 3 or any(v <= 0 for v in self.voxel_size):
            raise ValueError(f"voxel size must be 3 positive reals, got {self.voxel_size}")
        self.affine = np.asarray(self.affine, dtype=float)
        if self.affine.shape != (4, 4):
            raise ValueError("affine must be 4x4")
        if abs(np.linalg.det(self.affine)) < 1e-12:
            raise ValueError("affine must be invertible")

    @property
    def n_voxels(self):
        return self.dims[0] * self.dims[1] * self.dims[2]


@dataclass
class ParameterMaps:
    """K=4 encoded parameter channels over a grid, stored (4, nx, ny, nz)."""

    grid: VolumeGrid
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (4,) + self.grid.dims:
            raise ValueError(f"data must have shape (4,)+dims, got {self.data.shape}")

    @classmethod
    def constant(cls, grid: VolumeGrid, p: LogParams) -> "ParameterMaps":
        data = np.empty((4,) + grid.dims)
        data[:] = p.as_array()[:, None, None, None]
        return cls(grid, data)

    def channel(self, name: str) -> np.ndarray:
        return self.data[CHANNEL_NAMES.index(name)]

    def voxel(self, i, j, k) -> LogParams:
        return LogParams.from_array(self.data[:, i, j, k])


BASIS_NAMES = ("log", "rate", "time")
LOADING_NAMES = ("abs_diag", "abs_row_sum")


@dataclass
class FitConfig:
    """Solver schedule, tolerances and regularisation factors."""

    lam: tuple = (10.0, 10.0, 10.0, 10.0)
    irls_iters: int = 10
    newton_iters: int = 5
    cg_iters: int = 32
    tol_irls: float = 1e-5
    tol_newton: float = 1e-5
    tol_cg: float = 1e-3
    hessian_loading: str = "abs_diag"
    basis: str = "log"

    def __post_init__(self):
        self.lam = tuple(float(v) for v in np.broadcast_to(self.lam, (4,)))
        if any(v < 0 for v in self.lam):
            raise ValueError("regularisation factors must be >= 0")
        for name in ("irls_iters", "newton_iters", "cg_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("tol_irls", "tol_newton", "tol_cg"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.hessian_loading not in LOADING_NAMES:
            raise ValueError(f"hessian_loading must be one of {LOADING_NAMES}")
        if self.basis not in BASIS_NAMES:
            raise ValueError(f"basis must be one of {BASIS_NAMES}")


@dataclass
class FitReport:
    """Per-iteration objective trace and convergence flags of one fit."""

    objective_trace: list = field(default_factory=list)
    gain_trace: list = field(default_factory=list)
    converged: bool = False
    iterations_used: int = 0
    # optional extras filled by specific solvers
    outer_trace: list = field(default_factory=list)   # objective at IRLS boundaries
    flags: dict = field(default_factory=dict)
