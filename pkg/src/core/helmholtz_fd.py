#!/usr/bin/env python3
# src/core/helmholtz_fd.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
src/core/helmholtz_fd.py
Finite-volume discretization of  i eps u + Laplace(u) + n(x) u = -f  on the
disk of radius L in polar coordinates, and its sparse complex solve.

Grid layout: shells r_i = r_inner + i dr with r_inner = dr/2 and the last
shell at L, so dr = 2L/(2Nr - 1); angles theta_j = j dtheta. Unknowns are
ordered row-major over (i, j).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonConvergence, PreconditionError
from .index_models import AngularProfile, IndexModel

logger = logging.getLogger(__name__)

FIELD_HEADER = "r,theta,re,im"
ROLES = ("solution", "source", "derived")
DIRECT_SOLVE_LIMIT = 256 * 256


# ---------------------------------------------------------------------------
# Grid and fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolarGrid:
    Nr: int
    Ntheta: int
    L: float

    def __post_init__(self) -> None:
        if self.Nr < 4:
            raise PreconditionError(f"Nr must be >= 4, got {self.Nr}")
        if self.Ntheta < 8 or self.Ntheta % 2:
            raise PreconditionError(f"Ntheta must be even and >= 8, got {self.Ntheta}")
        if not self.L > 0.0:
            raise PreconditionError(f"L must be positive, got {self.L}")

    @property
    def dr(self) -> float:
        return 2.0 * self.L / (2 * self.Nr - 1)

    @property
    def r_inner(self) -> float:
        return 0.5 * self.dr

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.Ntheta

    @cached_property
    def r(self) -> np.ndarray:
        r = self.r_inner + self.dr * np.arange(self.Nr)
        r[-1] = self.L
        return r

    @cached_property
    def theta(self) -> np.ndarray:
        return self.dtheta * np.arange(self.Ntheta)

    @cached_property
    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """(R, Theta) arrays of shape (Nr, Ntheta)."""
        return np.meshgrid(self.r, self.theta, indexing="ij")

    @cached_property
    def cartesian(self) -> Tuple[np.ndarray, np.ndarray]:
        rr, tt = self.mesh
        return rr * np.cos(tt), rr * np.sin(tt)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.Nr, self.Ntheta

    @property
    def size(self) -> int:
        return self.Nr * self.Ntheta

    def radial_weights(self, lower: Optional[float] = None, upper: Optional[float] = None) -> np.ndarray:
        """Per-shell integral of r dr dtheta over cell_i within [lower, upper].

        Cells are [r_i - dr/2, r_i + dr/2] clipped to [r_inner, L]; constants
        integrate exactly for any lower/upper.
        """
        lo = np.maximum(self.r - 0.5 * self.dr, self.r_inner)
        hi = np.minimum(self.r + 0.5 * self.dr, self.L)
        if lower is not None:
            lo = np.maximum(lo, lower)
        if upper is not None:
            hi = np.minimum(hi, upper)
        hi = np.maximum(hi, lo)
        return 0.5 * (hi**2 - lo**2) * self.dtheta

    def radial_lengths(self, lower: Optional[float] = None, upper: Optional[float] = None) -> np.ndarray:
        """Per-shell integral of dr dtheta, the weights for integrands carrying 1/|x|."""
        lo = np.maximum(self.r - 0.5 * self.dr, self.r_inner)
        hi = np.minimum(self.r + 0.5 * self.dr, self.L)
        if lower is not None:
            lo = np.maximum(lo, lower)
        if upper is not None:
            hi = np.minimum(hi, upper)
        return np.maximum(hi - lo, 0.0) * self.dtheta

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights (Nr, Ntheta); they sum to pi (L^2 - r_inner^2)."""
        return np.repeat(self.radial_weights()[:, None], self.Ntheta, axis=1)

    @cached_property
    def volumes(self) -> np.ndarray:
        """Control volumes of the discrete operator, (Nr,).

        The pole cell is [0, dr] so every interior volume is r_i dr dtheta; the
        outer node carries the half cell.
        """
        vol = self.r * self.dr * self.dtheta
        vol[-1] = 0.5 * (self.L**2 - (self.L - 0.5 * self.dr) ** 2) * self.dtheta
        return vol

    def snap(self, R: float) -> Tuple[int, float]:
        """Nearest shell to R as (index, radius)."""
        i = int(np.argmin(np.abs(self.r - R)))
        return i, float(self.r[i])

    def to_dict(self) -> Dict[str, float]:
        return {"Nr": self.Nr, "Ntheta": self.Ntheta, "L": self.L, "r_inner": self.r_inner}


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex nodal values on a grid; read-only once constructed."""

    grid: PolarGrid
    values: np.ndarray
    role: str = "solution"

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=complex)
        if values.size == self.grid.size and values.shape != self.grid.shape:
            values = values.reshape(self.grid.shape)
        if values.shape != self.grid.shape:
            raise PreconditionError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise PreconditionError("field contains non-finite values")
        if self.role not in ROLES:
            raise PreconditionError(f"field role must be one of {ROLES}, got {self.role}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: PolarGrid, role: str = "solution") -> "ComplexField":
        return cls(grid, np.zeros(grid.shape, dtype=complex), role)

    @classmethod
    def from_function(
        cls, grid: PolarGrid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], role: str = "solution"
    ) -> "ComplexField":
        """Sample fn(x1, x2) at the grid nodes."""
        x1, x2 = grid.cartesian
        return cls(grid, np.broadcast_to(fn(x1, x2), grid.shape), role)

    @property
    def abs2(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def scaled(self, c: complex) -> "ComplexField":
        return ComplexField(self.grid, c * self.values, self.role)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def ring_source(grid: PolarGrid, r0: float = 3.0, width: float = 0.5, amplitude: float = 1.0) -> ComplexField:
    """Annular Gaussian exp(-(r - r0)^2 / (2 width^2)) scaled to L2 norm ``amplitude``."""
    rr, _ = grid.mesh
    return _normalized(grid, np.exp(-((rr - r0) ** 2) / (2.0 * width**2)), amplitude)


def gaussian_source(
    grid: PolarGrid, center: Sequence[float] = (0.0, 0.0), sigma: float = 0.5, amplitude: float = 1.0
) -> ComplexField:
    """Point-like Gaussian source scaled to L2 norm ``amplitude``."""
    x1, x2 = grid.cartesian
    dist2 = (x1 - center[0]) ** 2 + (x2 - center[1]) ** 2
    return _normalized(grid, np.exp(-dist2 / (2.0 * sigma**2)), amplitude)


def _normalized(grid: PolarGrid, profile: np.ndarray, amplitude: float) -> ComplexField:
    norm = math.sqrt(float(np.sum(grid.weights * profile**2)))
    if norm == 0.0:
        raise PreconditionError("source profile vanishes on the grid")
    return ComplexField(grid, amplitude * profile / norm, role="source")


# ---------------------------------------------------------------------------
# Field I/O
# ---------------------------------------------------------------------------

def field_table(u: ComplexField) -> np.ndarray:
    """Rows (r, theta, re, im), row-major over (i, j)."""
    rr, tt = u.grid.mesh
    return np.column_stack([rr.ravel(), tt.ravel(), u.values.real.ravel(), u.values.imag.ravel()])


def write_field_csv(u: ComplexField, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, field_table(u), fmt="%.16e", delimiter=",", header=FIELD_HEADER, comments="")
    return path


def read_field_csv(path: Path, grid: PolarGrid, role: str = "source") -> ComplexField:
    """Read a field dump; node coordinates must match ``grid``."""
    try:
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise PreconditionError(f"cannot read field file {path}: {e}") from e
    if data.shape != (grid.size, 4):
        raise PreconditionError(f"field file {path} has {data.shape[0]} rows, grid needs {grid.size}")
    rr, tt = grid.mesh
    if not (np.allclose(data[:, 0], rr.ravel(), rtol=1e-12) and np.allclose(data[:, 1], tt.ravel(), rtol=1e-12)):
        raise PreconditionError(f"field file {path} was written on a different grid")
    return ComplexField(grid, (data[:, 2] + 1j * data[:, 3]).reshape(grid.shape), role)


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryCondition:
    kind: str
    profile: Optional[AngularProfile] = None

    @classmethod
    def outgoing(cls, profile: Optional[AngularProfile]) -> "BoundaryCondition":
        if profile is None:
            raise PreconditionError("outgoing boundary condition requires an angular profile")
        return cls("outgoing", profile)

    @classmethod
    def dirichlet0(cls) -> "BoundaryCondition":
        return cls("dirichlet0")


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    grid: PolarGrid
    model: IndexModel
    epsilon: float
    bc: BoundaryCondition
    matrix: sp.csr_matrix
    laplacian: sp.csr_matrix
    index: np.ndarray = field(repr=False)
    # dirichlet0 only: coupling of the last interior shell to the eliminated boundary
    lift: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def boundary_rows(self) -> np.ndarray:
        return np.arange((self.grid.Nr - 1) * self.grid.Ntheta, self.grid.size)


def assemble(
    grid: PolarGrid,
    model: IndexModel,
    epsilon: float,
    bc: BoundaryCondition,
    include_laplacian: bool = True,
) -> DiscreteSystem:
    """Assemble the conservative 5-point polar stencil.

    Interior row (shell i, angle j), with r_(i+-1/2) = r_i +- dr/2:
        [r_(i+1/2)(u_(i+1) - u_i) - r_(i-1/2)(u_i - u_(i-1))] / (r_i dr^2)
        + (u_(j+1) - 2u_j + u_(j-1)) / (r_i dtheta)^2 + (n + i eps) u
    The ghost behind the innermost shell is the antipodal node (i=0, j+N/2);
    its face radius r_inner - dr/2 is zero so it carries no entry.
    """
    if epsilon < 0.0:
        raise PreconditionError(f"epsilon must be >= 0, got {epsilon}")
    if bc.kind == "dirichlet0" and epsilon == 0.0:
        raise PreconditionError("epsilon = 0 with a dirichlet0 boundary is ill-posed; use outgoing")
    if bc.kind not in ("outgoing", "dirichlet0"):
        raise PreconditionError(f"unknown boundary condition '{bc.kind}'")
    if bc.kind == "outgoing" and bc.profile is None:
        raise PreconditionError("outgoing boundary condition requires an angular profile")

    Nr, Nt = grid.shape
    dr, dth = grid.dr, grid.dtheta
    index = np.arange(grid.size).reshape(grid.shape)
    x1, x2 = grid.cartesian
    n = model.n(x1, x2)

    interior = slice(0, Nr - 1)
    ri = grid.r[interior][:, None]
    r_out = ri + 0.5 * dr
    r_in = ri - 0.5 * dr
    c_out = np.broadcast_to(r_out / (ri * dr**2), (Nr - 1, Nt))
    c_in = np.broadcast_to(r_in / (ri * dr**2), (Nr - 1, Nt))
    c_ang = np.broadcast_to(1.0 / (ri * dth) ** 2, (Nr - 1, Nt))

    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    lap_vals: List[np.ndarray] = []

    def couple(target: np.ndarray, coeff: np.ndarray) -> None:
        row = index[interior]
        keep = coeff != 0.0
        rows.append(row[keep])
        cols.append(target[keep])
        lap_vals.append(coeff[keep])

    couple(index[interior], -(c_out + c_in) - 2.0 * c_ang)
    couple(np.roll(index[interior], -1, axis=1), c_ang)
    couple(np.roll(index[interior], 1, axis=1), c_ang)

    c_wall = np.array(c_out)
    lift = None
    if bc.kind == "dirichlet0":
        lift = c_wall[-1].copy()
        c_wall[-1] = 0.0
    couple(index[1:Nr], c_wall)

    inward = np.empty((Nr - 1, Nt), dtype=index.dtype)
    inward[1:] = index[0 : Nr - 2]
    inward[0] = np.roll(index[0], -Nt // 2)
    couple(inward, c_in)

    row = np.concatenate(rows)
    col = np.concatenate(cols)
    lap = np.concatenate(lap_vals).astype(complex)
    laplacian = sp.coo_matrix((lap, (row, col)), shape=(grid.size, grid.size)).tocsr()

    diag_rows = index[interior].ravel()
    potential = (n[interior] + 1j * epsilon).ravel()
    b_rows, b_cols, b_vals = _boundary_rows(grid, bc, index)

    if include_laplacian:
        all_rows = np.concatenate([row, diag_rows, b_rows])
        all_cols = np.concatenate([col, diag_rows, b_cols])
        all_vals = np.concatenate([lap, potential, b_vals])
    else:
        all_rows = np.concatenate([diag_rows, b_rows])
        all_cols = np.concatenate([diag_rows, b_cols])
        all_vals = np.concatenate([potential, b_vals])
    matrix = sp.coo_matrix((all_vals, (all_rows, all_cols)), shape=(grid.size, grid.size)).tocsr()
    matrix.sum_duplicates()

    logger.debug(
        f"Assembled {grid.Nr}x{grid.Ntheta} system ({bc.kind}, eps={epsilon}) with {matrix.nnz} nonzeros"
    )
    return DiscreteSystem(grid, model, float(epsilon), bc, matrix, laplacian, index, lift)


def _boundary_rows(
    grid: PolarGrid, bc: BoundaryCondition, index: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    boundary = index[-1]
    if bc.kind == "dirichlet0":
        return boundary, boundary, np.ones(grid.Ntheta, dtype=complex)
    # (3u_N - 4u_(N-1) + u_(N-2)) / (2 dr) - i sqrt(n_inf) u_N = 0
    s = np.sqrt(bc.profile.eval(grid.theta))
    h = 2.0 * grid.dr
    rows = np.concatenate([boundary, boundary, boundary])
    cols = np.concatenate([boundary, index[-2], index[-3]])
    vals = np.concatenate(
        [3.0 / h - 1j * s, np.full(grid.Ntheta, -4.0 / h), np.full(grid.Ntheta, 1.0 / h)]
    ).astype(complex)
    return rows, cols, vals


# ---------------------------------------------------------------------------
# Solve
# ---------------------------------------------------------------------------

class Solution(NamedTuple):
    u: ComplexField
    residual: float
    iterations: int


def default_method(grid: PolarGrid) -> str:
    return "direct" if grid.size <= DIRECT_SOLVE_LIMIT else "bicgstab"


def solve(
    system: DiscreteSystem,
    f: ComplexField,
    method: Optional[str] = None,
    tol: float = 1e-10,
    max_iter: int = 2000,
    preconditioner: bool = True,
    boundary_values: Optional[np.ndarray] = None,
) -> Solution:
    """Solve A u = -f (boundary rows carry ``boundary_values`` or 0)."""
    method = method or default_method(system.grid)
    if f.grid != system.grid:
        raise PreconditionError("source and system live on different grids")
    if not tol > 0.0:
        raise PreconditionError(f"tol must be positive, got {tol}")

    b = -np.array(f.flat(), dtype=complex)
    b[system.boundary_rows] = 0.0 if boundary_values is None else boundary_values
    if boundary_values is not None and system.lift is not None:
        b[system.boundary_rows - system.grid.Ntheta] -= system.lift * boundary_values
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return Solution(ComplexField.zeros(system.grid), 0.0, 0)

    A = system.matrix
    if method == "direct":
        x = spla.spsolve(A.tocsc(), b)
        iterations = 1
    elif method == "bicgstab":
        x, iterations = _bicgstab(A, b, tol, max_iter, preconditioner)
    else:
        raise PreconditionError(f"unknown solver method '{method}'")

    residual = float(np.linalg.norm(A @ x - b)) / b_norm
    if method == "direct" and residual > tol:
        logger.warning(f"Direct solve residual {residual:.3e} exceeds tol {tol:.1e}")
    logger.info(f"Solved {system.grid.Nr}x{system.grid.Ntheta} ({method}): residual {residual:.3e}")
    return Solution(ComplexField(system.grid, x.reshape(system.grid.shape)), residual, iterations)


def _bicgstab(A: sp.csr_matrix, b: np.ndarray, tol: float, max_iter: int, preconditioner: bool):
    M = None
    if preconditioner:
        try:
            ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
            M = spla.LinearOperator(A.shape, matvec=ilu.solve, dtype=complex)
        except RuntimeError as e:
            logger.warning(f"ILU preconditioner failed ({e}); running unpreconditioned")

    iterations = 0

    def count(_xk: np.ndarray) -> None:
        nonlocal iterations
        iterations += 1

    x, info = spla.bicgstab(
        A, b, x0=np.zeros_like(b), rtol=tol, atol=0.0, maxiter=max_iter, M=M, callback=count
    )
    if info != 0:
        residual = float(np.linalg.norm(A @ x - b) / np.linalg.norm(b))
        raise NonConvergence(iterations, residual)
    return x, iterations


# ---------------------------------------------------------------------------
# Derivatives
# ---------------------------------------------------------------------------

def gradient(u: ComplexField) -> Tuple[ComplexField, ComplexField]:
    """(du/dr, (1/r) du/dtheta): centered inside, second-order one-sided at both radial ends."""
    grid = u.grid
    v = u.values
    dr = grid.dr
    du_r = np.empty_like(v)
    du_r[1:-1] = (v[2:] - v[:-2]) / (2.0 * dr)
    du_r[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dr)
    du_r[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dr)
    du_t = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2.0 * grid.dtheta * grid.r[:, None])
    return ComplexField(grid, du_r, "derived"), ComplexField(grid, du_t, "derived")


def cartesian_gradient(u: ComplexField) -> Tuple[np.ndarray, np.ndarray]:
    """(du/dx1, du/dx2) from the polar components."""
    du_r, du_t = gradient(u)
    _, tt = u.grid.mesh
    c, s = np.cos(tt), np.sin(tt)
    return c * du_r.values - s * du_t.values, s * du_r.values + c * du_t.values


# ---------------------------------------------------------------------------
# Manufactured solutions
# ---------------------------------------------------------------------------

def _gaussian_dipole(x1: np.ndarray, x2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    r2 = x1**2 + x2**2
    g = np.exp(-r2)
    return g * (1.0 + x1), g * ((4.0 * r2 - 4.0) + x1 * (4.0 * r2 - 8.0))


def _unit(x1: np.ndarray, x2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return np.ones_like(x1), np.zeros_like(x1)


MANUFACTURED: Dict[str, Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]] = {
    "gaussian": _gaussian_dipole,
    "constant": _unit,
}


@dataclass
class ConvergenceStudy:
    sizes: List[int]
    pairs: List[Tuple[float, float]]
    orders: List[float]

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "h": [h for h, _ in self.pairs],
            "error": [e for _, e in self.pairs],
            "orders": self.orders,
        }


def manufactured_convergence(
    model: IndexModel,
    epsilon: float,
    levels: Sequence[int],
    L: float = 5.0,
    solution: str = "gaussian",
    method: str = "direct",
) -> ConvergenceStudy:
    """Max-norm error of u* = exp(-r^2)(1 + r cos theta) on N x N grids.

    The source is f = -(i eps u* + Laplace u* + n u*) and the boundary rows
    carry the exact Dirichlet data.
    """
    if len(levels) < 3:
        raise PreconditionError("manufactured convergence needs at least 3 levels")
    exact = MANUFACTURED[solution]
    pairs: List[Tuple[float, float]] = []
    for N in levels:
        grid = PolarGrid(N, N, L)
        x1, x2 = grid.cartesian
        u_star, lap = exact(x1, x2)
        n = model.n(x1, x2)
        f = ComplexField(grid, -(1j * epsilon * u_star + lap + n * u_star), "source")
        system = assemble(grid, model, epsilon, BoundaryCondition.dirichlet0())
        u, _, _ = solve(system, f, method=method, boundary_values=u_star[-1])
        error = float(np.max(np.abs(u.values - u_star)))
        pairs.append((grid.dr, error))
        logger.info(f"Manufactured level N={N}: h={grid.dr:.4e}, error={error:.4e}")

    orders = []
    for (h1, e1), (h2, e2) in zip(pairs, pairs[1:]):
        orders.append(math.log(e1 / e2) / math.log(h1 / h2) if e1 > 0.0 and e2 > 0.0 else float("nan"))
    return ConvergenceStudy(list(levels), pairs, orders)
