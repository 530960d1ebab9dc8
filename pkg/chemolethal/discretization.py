"""Cell-centered finite-volume operators with zero-flux (Neumann) closure.

Every divergence-form operator is assembled from face fluxes on interior
faces; boundary faces carry zero flux, so the discrete integral of each
result telescopes to zero.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
import scipy.sparse as sps

from .exceptions import NegativeDensityError
from .model import canonical_D, canonical_S
from .schemas import Grid


@dataclass(frozen=True)
class Field:
    """One finite value per cell of ``grid``, stored with the grid's shape"""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise ValueError(f"field has {values.size} values, grid has {self.grid.size} cells")
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(np.full(grid.shape, float(value)), grid)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray]) -> "Field":
        """Sample ``fn(x[, y])`` at cell centers"""
        return cls(np.broadcast_to(fn(*grid.mesh()), grid.shape), grid)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


def _neighbors(values: np.ndarray, axis: int) -> Tuple[np.ndarray, np.ndarray]:
    """Lower and upper cell of every interior face along ``axis``"""
    lo = [slice(None)] * values.ndim
    hi = [slice(None)] * values.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return values[tuple(lo)], values[tuple(hi)]


def _face_gradient(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    return np.diff(values, axis=axis) / h


def _divergence(flux: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Cell divergence of interior-face fluxes with zero flux on both boundary faces"""
    pad = [(0, 0)] * flux.ndim
    pad[axis] = (1, 1)
    return np.diff(np.pad(flux, pad), axis=axis) / h


def _require_nonnegative(u: Field, name: str = "u") -> None:
    if u.values.min() < 0:
        raise NegativeDensityError(f"{name} has negative cells (min {u.values.min():.3e})")


def _diffusive_divergence(values: np.ndarray, diffusivity: np.ndarray, grid: Grid) -> np.ndarray:
    out = np.zeros(grid.shape)
    for axis, h in enumerate(grid.h):
        lo, hi = _neighbors(diffusivity, axis)
        out += _divergence(0.5 * (lo + hi) * _face_gradient(values, h, axis), h, axis)
    return out


def laplacian_neumann(phi: Field) -> Field:
    """3-point (1D) / 5-point (2D) Laplacian with mirrored ghost cells"""
    grid = phi.grid
    out = np.zeros(grid.shape)
    for axis, h in enumerate(grid.h):
        out += _divergence(_face_gradient(phi.values, h, axis), h, axis)
    return Field(out, grid)


def div_nonlinear_diffusion(u: Field, alpha: float) -> Field:
    """div((1 + u)^alpha grad u) with arithmetic-mean face diffusivity"""
    _require_nonnegative(u)
    if alpha == 0:
        return laplacian_neumann(u)
    return Field(_diffusive_divergence(u.values, canonical_D(u.values, alpha), u.grid), u.grid)


def div_chemotactic_flux(u: Field, v: Field, beta: float, chi: float) -> Field:
    """+chi div(S(u) grad v) with the donor cell chosen by the drift direction.

    The drift carries u toward lower v, so at a face with dv/dn > 0 the mass
    leaves the upper cell and that cell supplies S(u).
    """
    _require_nonnegative(u)
    grid = u.grid
    out = np.zeros(grid.shape)
    if chi == 0:
        return Field(out, grid)
    s = canonical_S(u.values, beta)
    for axis, h in enumerate(grid.h):
        dv = _face_gradient(v.values, h, axis)
        s_lo, s_hi = _neighbors(s, axis)
        donor = np.where(dv > 0, s_hi, s_lo)
        out += _divergence(chi * donor * dv, h, axis)
    return Field(out, grid)


def integrate(phi: Field) -> float:
    """Midpoint rule: cell-volume-weighted sum"""
    return float(phi.values.sum() * phi.grid.cell_volume)


def gradient_sup(phi: Field) -> float:
    """Discrete gradient sup: largest one-sided difference quotient over all axes"""
    return max(
        float(np.abs(_face_gradient(phi.values, h, axis)).max())
        for axis, h in enumerate(phi.grid.h)
    )


def _laplacian_1d(n: int, h: float) -> sps.csr_matrix:
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    return sps.diags([off, main, off], offsets=[-1, 0, 1], format="csr") / h**2


@lru_cache(maxsize=32)
def laplacian_matrix(grid: Grid) -> sps.csr_matrix:
    """Sparse Neumann Laplacian acting on C-ordered flattened cell values"""
    blocks = [_laplacian_1d(n, h) for n, h in zip(grid.cells, grid.h)]
    if grid.dim == 1:
        return blocks[0]
    n0, n1 = grid.cells
    return (sps.kron(blocks[0], sps.identity(n1)) + sps.kron(sps.identity(n0), blocks[1])).tocsr()


def wavenumbers_squared(grid: Grid) -> np.ndarray:
    """Eigenvalues of -laplacian_matrix per DCT-II mode, with the grid's shape"""
    per_axis = [
        (4.0 / h**2) * np.sin(np.pi * np.arange(n) / (2 * n)) ** 2
        for n, h in zip(grid.cells, grid.h)
    ]
    if grid.dim == 1:
        return per_axis[0]
    return per_axis[0][:, None] + per_axis[1][None, :]
