"""Finite-difference solve of -lap(alpha * u) = f with zero Dirichlet data.

Second derivatives use the three-point stencil for non-uniform spacing,
applied to w = alpha * u:

    w''(x_i) ~ 2 * [ w_{i-1} / (hL * (hL + hR))
                   - w_i     / (hL * hR)
                   + w_{i+1} / (hR * (hL + hR)) ]

with hL, hR the neighbouring gaps.  The interior system is solved directly:
dense LU at the problem sizes used here, sparse LU past a few thousand
unknowns.  Every solve verifies its own residual before returning.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SolverError
from .grid import Field, ScenarioParams, TensorMesh, mesh_to_params, params_to_mesh
from .runtime import run_ordered

RESIDUAL_TOL = 1e-10
_DENSE_LIMIT = 4096


@dataclass(frozen=True)
class SolveReport:
    """Solution field plus the residual and timing evidence for it."""

    field: Field
    residual_norm: float
    solve_time: float


def _axis_coeffs(lines: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    hL = lines[1:-1] - lines[:-2]
    hR = lines[2:] - lines[1:-1]
    total = hL + hR
    return 2.0 / (hL * total), -2.0 / (hL * hR), 2.0 / (hR * total)


def _system(mesh: TensorMesh):
    """Triplet form of the negative Laplacian over interior nodes.

    Interior unknowns are ordered row-major over (j, i), matching Field
    storage restricted to the interior.
    """
    nx, ny = mesh.shape
    nxi, nyi = nx - 2, ny - 2
    if nxi < 1 or nyi < 1:
        raise ValueError(f"mesh {nx}x{ny} has no interior nodes to solve for")
    cxL, cxC, cxR = _axis_coeffs(mesh.x_lines)
    cyL, cyC, cyR = _axis_coeffs(mesh.y_lines)
    n = nxi * nyi
    idx = np.arange(n)
    cols_i = idx % nxi
    rows_j = idx // nxi
    main = -(cyC[:, None] + cxC[None, :]).ravel()
    west = -np.tile(cxL, nyi)
    east = -np.tile(cxR, nyi)
    south = -np.repeat(cyL, nxi)
    north = -np.repeat(cyR, nxi)
    w_ok = cols_i > 0
    e_ok = cols_i < nxi - 1
    s_ok = rows_j > 0
    n_ok = rows_j < nyi - 1
    rows = np.concatenate([idx, idx[w_ok], idx[e_ok], idx[s_ok], idx[n_ok]])
    cols = np.concatenate(
        [idx, idx[w_ok] - 1, idx[e_ok] + 1, idx[s_ok] - nxi, idx[n_ok] + nxi]
    )
    data = np.concatenate([main, west[w_ok], east[e_ok], south[s_ok], north[n_ok]])
    return n, rows, cols, data


def _matvec(n: int, rows, cols, data, vec: np.ndarray) -> np.ndarray:
    out = np.zeros(n)
    np.add.at(out, rows, data * vec[cols])
    return out


def _solve_interior(n: int, rows, cols, data, rhs: np.ndarray) -> np.ndarray:
    if n <= _DENSE_LIMIT:
        dense = np.zeros((n, n))
        dense[rows, cols] = data
        return np.linalg.solve(dense, rhs)
    from scipy.sparse import coo_matrix
    from scipy.sparse.linalg import spsolve

    return spsolve(coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr(), rhs)


def _solve(
    mesh: TensorMesh,
    params: ScenarioParams,
    rhs_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> SolveReport:
    start = time.perf_counter()
    nx, ny = mesh.shape
    nxi, nyi = nx - 2, ny - 2
    n, rows, cols, data = _system(mesh)
    xi = np.tile(mesh.x_lines[1:-1], nyi)
    yi = np.repeat(mesh.y_lines[1:-1], nxi)
    rhs = np.asarray(rhs_fn(xi, yi), dtype=float)
    w = _solve_interior(n, rows, cols, data, rhs)
    if not np.all(np.isfinite(w)):
        raise SolverError(f"linear solve on a {nx}x{ny} mesh produced non-finite values")
    u = w / params.alpha
    residual = float(np.max(np.abs(_matvec(n, rows, cols, data, params.alpha * u) - rhs)))
    if not np.isfinite(residual) or residual > RESIDUAL_TOL:
        raise SolverError(
            f"solve residual {residual:.3e} exceeds tolerance {RESIDUAL_TOL:.1e}",
            residual=residual,
        )
    full = np.zeros((ny, nx))
    full[1:-1, 1:-1] = u.reshape(nyi, nxi)
    return SolveReport(Field(full.ravel(), mesh.shape), residual, time.perf_counter() - start)


def solve_poisson(mesh: TensorMesh, params: ScenarioParams) -> SolveReport:
    """Solve -lap(alpha * u) = 1 with u = 0 on the boundary."""
    return _solve(mesh, params, lambda x, y: np.ones_like(x))


def solve_manufactured(mesh: TensorMesh, params: ScenarioParams) -> SolveReport:
    """Solve against the source 2*pi^2*sin(pi x)*sin(pi y).

    The exact solution is u = sin(pi x) * sin(pi y) / alpha, i.e. the source
    is manufactured so alpha * u equals the plain product of sines; the
    discrete solution converges to it at second order.
    """
    return _solve(
        mesh,
        params,
        lambda x, y: 2.0 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y),
    )


def make_evaluate(
    template: TensorMesh,
    params: ScenarioParams,
    *,
    solve: Callable[[TensorMesh, ScenarioParams], SolveReport] = solve_poisson,
) -> Callable[[np.ndarray], np.ndarray]:
    """Opaque forward interface: mesh-parameter vector in, field values out.

    This is the only view of the solver that gradient-estimation code gets.
    """

    def evaluate(p: np.ndarray) -> np.ndarray:
        return solve(params_to_mesh(template, p), params).field.values

    return evaluate


def exact_mesh_vjp(
    mesh: TensorMesh,
    params: ScenarioParams,
    v: Field,
    h: float = 1e-6,
    *,
    solve: Callable[[TensorMesh, ScenarioParams], SolveReport] = solve_poisson,
) -> np.ndarray:
    """Central-difference oracle for the mesh-parameter VJP.

    Component k is <v, (O(p + h e_k) - O(p - h e_k))> / (2 h) where O maps
    mesh parameters to solved field values.  Costs 2 * D solves.  Kept apart
    from the estimator code, which must only ever see make_evaluate.
    """
    if v.mesh_shape != mesh.shape:
        raise ValueError(f"cotangent shape {v.mesh_shape} does not match mesh {mesh.shape}")
    if h <= 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    p0 = mesh_to_params(mesh)
    perturbed = []
    for k in range(p0.size):
        step = np.zeros(p0.size)
        step[k] = h
        perturbed.append(p0 + step)
        perturbed.append(p0 - step)
    fields = run_ordered(
        lambda p: solve(params_to_mesh(mesh, p), params).field.values, perturbed
    )
    grad = np.empty(p0.size)
    for k in range(p0.size):
        grad[k] = float(v.values @ (fields[2 * k] - fields[2 * k + 1])) / (2.0 * h)
    return grad
