"""Gradient estimation for black-box vector maps from forward evaluations.

Given a cotangent v and a base output O(m0), each scheme draws b directions
u_j, evaluates O(m0 + mu * u_j), and returns

    (1/b) * sum_j  <v, O(m0 + mu * u_j) - O(m0)> / mu  *  u_j

Directions are single coordinates (sampled without replacement), dense
standard normals, or normals restricted to one random coordinate subset per
call.  The 1/b average is kept as-is for every scheme, so a full coordinate
pass returns the finite-difference gradient divided by the dimension; the
per-coordinate normalization of Adam absorbs that scale downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import ConfigError, SolverError
from .runtime import run_ordered

ESTIMATOR_KINDS = ("coordinate", "gaussian", "gauss_coord")


@dataclass(frozen=True)
class EstimatorSpec:
    """Which perturbation scheme to use and its knobs.

    d only matters for gauss_coord and must not exceed the input dimension
    at call time.
    """

    kind: str
    mu: float = 1e-3
    b: int = 1
    d: int = 16
    seed: int = 0

    def validate(self, dim: int) -> None:
        if self.kind not in ESTIMATOR_KINDS:
            raise ConfigError(
                f"unknown estimator kind {self.kind!r}, expected one of {ESTIMATOR_KINDS}"
            )
        if not np.isfinite(self.mu) or self.mu <= 0:
            raise ConfigError(f"perturbation size mu must be positive, got {self.mu}")
        if self.b < 1:
            raise ConfigError(f"draw count b must be at least 1, got {self.b}")
        if dim < 1:
            raise ConfigError(f"input dimension must be at least 1, got {dim}")
        if self.kind == "gauss_coord" and not 1 <= self.d <= dim:
            raise ConfigError(f"subset size d={self.d} must lie in [1, {dim}]")


@dataclass(frozen=True)
class PerturbationDraw:
    """One direction plus where it came from."""

    direction: np.ndarray
    coordinate: int | None = None
    subset: np.ndarray | None = None


def _substreams(seed: int):
    direction_seed, subset_seed = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(direction_seed), np.random.default_rng(subset_seed)


def draw_directions(spec: EstimatorSpec, dim: int) -> list[PerturbationDraw]:
    """Materialize all b directions up front, in a deterministic order.

    The subset draw for gauss_coord uses its own substream, so with d == dim
    the directions match the gaussian kind bit for bit under the same seed.
    """
    spec.validate(dim)
    rng_dir, rng_sub = _substreams(spec.seed)
    draws: list[PerturbationDraw] = []
    if spec.kind == "coordinate":
        order: list[int] = []
        while len(order) < spec.b:
            order.extend(rng_dir.permutation(dim).tolist())
        for xi in order[: spec.b]:
            e = np.zeros(dim)
            e[xi] = 1.0
            draws.append(PerturbationDraw(e, coordinate=int(xi)))
    elif spec.kind == "gaussian":
        for _ in range(spec.b):
            draws.append(PerturbationDraw(rng_dir.standard_normal(dim)))
    else:
        subset = np.sort(rng_sub.permutation(dim)[: spec.d])
        mask = np.zeros(dim, dtype=bool)
        mask[subset] = True
        for _ in range(spec.b):
            g = rng_dir.standard_normal(dim)
            draws.append(PerturbationDraw(np.where(mask, g, 0.0), subset=subset))
    return draws


def zo_vjp(
    evaluate: Callable[[np.ndarray], np.ndarray],
    m0: np.ndarray,
    base_output: np.ndarray,
    v: np.ndarray,
    spec: EstimatorSpec,
) -> tuple[np.ndarray, int]:
    """Estimate the VJP of evaluate at m0 from exactly b forward calls.

    The caller supplies base_output = evaluate(m0) so the base solve is never
    repeated.
    """
    m0 = np.asarray(m0, dtype=float)
    base = np.asarray(base_output, dtype=float)
    cot = np.asarray(v, dtype=float)
    if cot.shape != base.shape:
        raise ValueError(
            f"cotangent shape {cot.shape} does not match output shape {base.shape}"
        )
    draws = draw_directions(spec, m0.size)
    outputs = run_ordered(evaluate, [m0 + spec.mu * d.direction for d in draws])
    grad = np.zeros(m0.size)
    for draw, out in zip(draws, outputs):
        out = np.asarray(out, dtype=float)
        if out.shape != base.shape:
            raise ValueError(
                f"evaluate returned shape {out.shape}, expected {base.shape}"
            )
        if not np.all(np.isfinite(out)):
            raise SolverError("evaluate returned non-finite values during estimation")
        s = float(cot @ (out - base)) / spec.mu
        grad += s * draw.direction
    grad /= spec.b
    return grad, spec.b


def zo_grad_scalar(
    f: Callable[[np.ndarray], float], m0: np.ndarray, spec: EstimatorSpec
) -> np.ndarray:
    """Gradient estimate for a scalar objective; evaluates the base once."""
    m0 = np.asarray(m0, dtype=float)

    def wrapped(p: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(f(p), dtype=float))

    base = wrapped(m0)
    if base.size != 1:
        raise ValueError(f"objective must be scalar-valued, got {base.size} outputs")
    grad, _ = zo_vjp(wrapped, m0, base, np.ones(1), spec)
    return grad


def estimator_stats(
    f: Callable[[np.ndarray], float],
    m0: np.ndarray,
    spec: EstimatorSpec,
    trials: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise empirical mean and variance over independent trials.

    Trial i reruns zo_grad_scalar with seed spec.seed + i.
    """
    if trials < 2:
        raise ConfigError(f"variance needs at least 2 trials, got {trials}")
    m0 = np.asarray(m0, dtype=float)
    estimates = np.empty((trials, m0.size))
    for i in range(trials):
        estimates[i] = zo_grad_scalar(f, m0, replace(spec, seed=spec.seed + i))
    return estimates.mean(axis=0), estimates.var(axis=0, ddof=1)
