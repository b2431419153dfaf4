"""Joint training of the correction network and the coarse-mesh lines.

Network weights always get exact reverse-mode gradients.  Mesh parameters get
nothing (frozen), a central-difference oracle (exact), or a zeroth-order
estimate assembled from forward solves only; during the warm-start epochs the
mesh is held frozen regardless of mode, which costs no extra solves.  The
trainer only ever touches the solver through counted callables, so the
per-epoch eval numbers in the metrics are exact budgets.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import net
from .errors import ConfigError, SolverError
from .grid import (
    Field,
    ScenarioParams,
    TensorMesh,
    init_coarse_from_fine,
    mesh_to_params,
    nearest_upsample,
    params_to_mesh,
    uniform_mesh,
    upsample_adjoint,
)
from .optim import AdamState, NonFiniteGradient, adam_step, init_adam
from .solver import exact_mesh_vjp, make_evaluate, solve_poisson
from .zo import EstimatorSpec, zo_vjp

log = logging.getLogger(__name__)

MESH_MODES = ("frozen", "exact", "coordinate", "gaussian", "gauss_coord")
ZO_MODES = ("coordinate", "gaussian", "gauss_coord")
NET_DIMS = net.DEFAULT_DIMS
METRICS_HEADER = "epoch,train_loss,test_rmse,n_solver_evals,mesh_delta,wall_time_s"
INCOMPLETE_MARKER = "# incomplete"


@dataclass(frozen=True)
class TrainConfig:
    fine_n: int = 33
    coarse_n: int = 9
    train_alphas: tuple[float, ...] = (0.90, 0.91, 0.92, 0.93, 0.94, 0.95)
    test_alphas: tuple[float, ...] = (0.905, 0.925, 0.945)
    mesh_mode: str = "frozen"
    estimator: EstimatorSpec = field(default_factory=lambda: EstimatorSpec("coordinate"))
    scenario_batch: int | None = None
    epochs: int = 200
    warm_start_epochs: int = 50
    lr: float = 5e-5
    mesh_lr: float | None = None
    seed: int = 0
    out_dir: str = "out"

    @property
    def batch_size(self) -> int:
        if self.scenario_batch is not None:
            return self.scenario_batch
        return min(16, len(self.train_alphas))

    def validate(self) -> None:
        if self.mesh_mode not in MESH_MODES:
            raise ConfigError(
                f"unknown mesh_mode {self.mesh_mode!r}, expected one of {MESH_MODES}"
            )
        if self.fine_n < 3 or self.coarse_n < 3:
            raise ConfigError(
                f"mesh sizes need at least 3 lines per axis, got fine={self.fine_n} "
                f"coarse={self.coarse_n}"
            )
        if self.coarse_n >= self.fine_n:
            raise ConfigError(
                f"coarse_n={self.coarse_n} must be smaller than fine_n={self.fine_n}"
            )
        if not self.train_alphas:
            raise ConfigError("train_alphas must not be empty")
        for a in (*self.train_alphas, *self.test_alphas):
            if not np.isfinite(a) or a <= 0:
                raise ConfigError(f"alphas must be positive and finite, got {a}")
        if set(self.train_alphas) & set(self.test_alphas):
            raise ConfigError("train and test alphas must be disjoint")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if not 0 <= self.warm_start_epochs <= self.epochs:
            raise ConfigError(
                f"warm_start_epochs={self.warm_start_epochs} must lie in [0, epochs="
                f"{self.epochs}]"
            )
        if self.scenario_batch is not None and self.scenario_batch < 1:
            raise ConfigError(f"scenario_batch must be >= 1, got {self.scenario_batch}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.mesh_lr is not None and self.mesh_lr <= 0:
            raise ConfigError(f"mesh_lr must be positive, got {self.mesh_lr}")
        if self.mesh_mode in ZO_MODES:
            if self.estimator.mu <= 0:
                raise ConfigError(f"estimator mu must be positive, got {self.estimator.mu}")
            if self.estimator.b < 1:
                raise ConfigError(f"estimator b must be >= 1, got {self.estimator.b}")
            if self.mesh_mode == "gauss_coord" and self.estimator.d < 1:
                raise ConfigError(f"estimator d must be >= 1, got {self.estimator.d}")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    test_rmse: float
    n_solver_evals: int
    mesh_delta: float
    wall_time: float


@dataclass(frozen=True)
class TrainState:
    mesh: TensorMesh
    net: net.MlpParams
    adam_net: AdamState
    adam_mesh: AdamState
    epoch: int


class SolveCounter:
    """Counts every solver invocation routed through wrap()."""

    def __init__(self):
        self.count = 0
        self._lock = threading.Lock()

    def wrap(self, solve):
        def counted(mesh, scenario):
            with self._lock:
                self.count += 1
            return solve(mesh, scenario)

        return counted


@dataclass(frozen=True)
class LossCache:
    coarse_mesh: TensorMesh
    fine_mesh: TensorMesh
    net_params: net.MlpParams
    net_cache: net.ForwardCache
    predictions: np.ndarray
    coarse_field: Field
    upsampled: Field
    fine_field: Field


def node_features(fine_mesh: TensorMesh, upsampled: np.ndarray, alpha: float) -> np.ndarray:
    """Per-fine-node rows [x, y, upsampled value, alpha]."""
    xs, ys = fine_mesh.node_coords()
    return np.column_stack([xs, ys, upsampled, np.full(xs.size, float(alpha))])


def loss_from_coarse_field(
    coarse_mesh: TensorMesh,
    net_params: net.MlpParams,
    scenario: ScenarioParams,
    coarse_field: Field,
    fine_mesh: TensorMesh,
    fine_field: Field,
) -> tuple[float, LossCache]:
    """MSE over all fine nodes, driven from an already-solved coarse field."""
    u_up = nearest_upsample(coarse_mesh, coarse_field, fine_mesh)
    feats = node_features(fine_mesh, u_up.values, scenario.alpha)
    preds, cache = net.forward(net_params, feats)
    resid = preds[:, 0] - fine_field.values
    loss = float(resid @ resid / resid.size)
    return loss, LossCache(
        coarse_mesh, fine_mesh, net_params, cache, preds, coarse_field, u_up, fine_field
    )


def loss_forward(
    coarse_mesh: TensorMesh,
    net_params: net.MlpParams,
    scenario: ScenarioParams,
    fine_mesh: TensorMesh,
    fine_field: Field,
    *,
    solve=solve_poisson,
) -> tuple[float, LossCache, Field, Field]:
    """Coarse solve, nearest upsample, network correction, MSE against truth."""
    coarse_field = solve(coarse_mesh, scenario).field
    loss, cache = loss_from_coarse_field(
        coarse_mesh, net_params, scenario, coarse_field, fine_mesh, fine_field
    )
    return loss, cache, coarse_field, fine_field


def loss_backward(cache: LossCache) -> tuple[net.MlpGrads, Field]:
    """Exact gradients of one scenario's MSE.

    Returns network parameter gradients and the coarse-field cotangent
    (the upsample adjoint of the network's input gradient in the upsampled
    column).
    """
    n = cache.predictions.shape[0]
    cot = np.zeros_like(cache.predictions)
    cot[:, 0] = 2.0 * (cache.predictions[:, 0] - cache.fine_field.values) / n
    grads, input_grads = net.backward(cache.net_params, cache.net_cache, cot)
    fine_cot = Field(input_grads[:, 2], cache.fine_mesh.shape)
    v_coarse = upsample_adjoint(cache.coarse_mesh, cache.fine_mesh, fine_cot)
    return grads, v_coarse


def mesh_grad(
    mode: str,
    mesh: TensorMesh,
    v_coarse: Field,
    scenario: ScenarioParams,
    spec: EstimatorSpec | None = None,
    *,
    base_output: np.ndarray | None = None,
    solve=solve_poisson,
) -> tuple[np.ndarray, int]:
    """Mesh-parameter gradient for one scenario: (gradient, solver evals).

    frozen costs nothing, exact costs 2 * D central-difference solves, the
    estimator modes cost exactly b solves and require the caller's base
    output.  For gauss_coord the subset size is clipped to D.
    """
    dim = mesh.n_params
    if mode == "frozen":
        return np.zeros(dim), 0
    if mode == "exact":
        return exact_mesh_vjp(mesh, scenario, v_coarse, solve=solve), 2 * dim
    if mode not in ZO_MODES:
        raise ConfigError(f"unknown mesh mode {mode!r}, expected one of {MESH_MODES}")
    if spec is None:
        raise ConfigError(f"mesh mode {mode!r} needs an estimator spec")
    if base_output is None:
        raise ValueError("estimator modes need the base coarse solve's values")
    effective = replace(spec, kind=mode)
    if mode == "gauss_coord":
        effective = replace(effective, d=min(effective.d, dim))
    evaluate = make_evaluate(mesh, scenario, solve=solve)
    return zo_vjp(evaluate, mesh_to_params(mesh), base_output, v_coarse.values, effective)


def rmse(pred: Field, truth: Field) -> float:
    if pred.mesh_shape != truth.mesh_shape:
        raise ValueError(
            f"field shapes {pred.mesh_shape} and {truth.mesh_shape} do not match"
        )
    diff = pred.values - truth.values
    return float(np.sqrt(diff @ diff / diff.size))


def initial_coarse_mesh(config: TrainConfig) -> TensorMesh:
    """Down-sample the uniform fine mesh when the stride divides, else start
    from the uniform coarse mesh directly (the two agree whenever both are
    defined)."""
    if (config.fine_n - 1) % (config.coarse_n - 1) == 0:
        return init_coarse_from_fine(
            config.fine_n, config.fine_n, config.coarse_n, config.coarse_n
        )
    return uniform_mesh(config.coarse_n)


def declared_evals(config: TrainConfig, epochs_done: int | None = None) -> int:
    """Closed-form solver-call budget after a number of completed epochs.

    Counts the one-off fine ground-truth solves, the per-epoch train forward
    and test evaluation solves, and the per-scenario mesh-gradient solves in
    joint epochs.  train_run's instrumented counter must match this exactly.
    """
    done = config.epochs if epochs_done is None else epochs_done
    if done == 0:
        return 0
    n_train = len(config.train_alphas)
    n_test = len(config.test_alphas)
    total = n_train + n_test  # fine ground-truth solves, all during epoch 0
    total += done * (n_train + n_test)
    joint = max(0, min(done, config.epochs) - config.warm_start_epochs)
    if config.mesh_mode == "exact":
        per_scenario = 4 * (config.coarse_n - 2)  # 2 solves per mesh parameter
    elif config.mesh_mode in ZO_MODES:
        per_scenario = config.estimator.b
    else:
        per_scenario = 0
    total += joint * n_train * per_scenario
    return total


def write_metrics_csv(path: str | Path, metrics, incomplete: bool = False) -> None:
    rows = [METRICS_HEADER]
    for m in metrics:
        rows.append(
            f"{m.epoch},{float(m.train_loss)!r},{float(m.test_rmse)!r},"
            f"{m.n_solver_evals},{float(m.mesh_delta)!r},{float(m.wall_time)!r}"
        )
    if incomplete:
        rows.append(INCOMPLETE_MARKER)
    Path(path).write_text("\n".join(rows) + "\n")


def _adam_to_dict(state: AdamState) -> dict:
    return {
        "m": state.m.tolist(),
        "v": state.v.tolist(),
        "t": state.t,
        "lr": state.lr,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "eps": state.eps,
    }


def config_to_dict(config: TrainConfig) -> dict:
    return asdict(config)


def write_checkpoint(path: str | Path, config: TrainConfig, state: TrainState) -> None:
    payload = {
        "config": config_to_dict(config),
        "mesh": {
            "x_lines": state.mesh.x_lines.tolist(),
            "y_lines": state.mesh.y_lines.tolist(),
            "s_min": state.mesh.s_min,
        },
        "net": {
            "layer_dims": list(state.net.layer_dims),
            "weights": [w.tolist() for w in state.net.weights],
            "biases": [b.tolist() for b in state.net.biases],
            "seed": state.net.seed,
        },
        "adam": {
            "net": _adam_to_dict(state.adam_net),
            "mesh": _adam_to_dict(state.adam_mesh),
        },
        "epoch": state.epoch,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def train_run(
    config: TrainConfig,
    *,
    init_mesh: TensorMesh | None = None,
    init_net: net.MlpParams | None = None,
) -> tuple[list[EpochMetrics], TrainState]:
    """Run the full training loop; writes metrics.csv and checkpoint.json.

    On a solver failure the metrics collected so far are flushed with a
    trailing incomplete marker and the error re-raised.
    """
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counter = SolveCounter()
    solve = counter.wrap(solve_poisson)

    fine_mesh = uniform_mesh(config.fine_n)
    truths: dict[float, Field] = {}

    def fine_truth(alpha: float) -> Field:
        if alpha not in truths:
            truths[alpha] = solve(fine_mesh, ScenarioParams(alpha)).field
        return truths[alpha]

    coarse = init_mesh if init_mesh is not None else initial_coarse_mesh(config)
    params0 = mesh_to_params(coarse)
    netp = init_net if init_net is not None else net.init_params(NET_DIMS, config.seed)
    mesh_lr = config.lr if config.mesh_lr is None else config.mesh_lr
    adam_net = init_adam(net.flatten(netp).size, config.lr)
    adam_mesh = init_adam(max(params0.size, 1), mesh_lr)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    est_calls = 0
    metrics: list[EpochMetrics] = []
    start = time.perf_counter()
    try:
        for epoch in range(config.epochs):
            joint = config.mesh_mode != "frozen" and epoch >= config.warm_start_epochs
            order = shuffle_rng.permutation(len(config.train_alphas))
            batch_losses = []
            for lo in range(0, order.size, config.batch_size):
                batch_alphas = [config.train_alphas[k] for k in order[lo : lo + config.batch_size]]
                n_batch = len(batch_alphas)
                entries = []
                for alpha in batch_alphas:
                    scenario = ScenarioParams(alpha)
                    loss, cache, coarse_field, _ = loss_forward(
                        coarse, netp, scenario, fine_mesh, fine_truth(alpha), solve=solve
                    )
                    entries.append((alpha, loss, cache, coarse_field))
                batch_losses.append(float(np.mean([e[1] for e in entries])))
                theta_grads = []
                mesh_g = np.zeros(params0.size)
                for alpha, _, cache, coarse_field in entries:
                    grads, v_coarse = loss_backward(cache)
                    theta_grads.append(net.flatten(grads))
                    if joint:
                        v_scaled = Field(v_coarse.values / n_batch, v_coarse.mesh_shape)
                        spec = None
                        if config.mesh_mode in ZO_MODES:
                            spec = replace(
                                config.estimator, seed=config.estimator.seed + est_calls
                            )
                            est_calls += 1
                        g, _ = mesh_grad(
                            config.mesh_mode,
                            coarse,
                            v_scaled,
                            ScenarioParams(alpha),
                            spec,
                            base_output=coarse_field.values,
                            solve=solve,
                        )
                        mesh_g += g
                theta_grad = np.mean(np.stack(theta_grads), axis=0)
                try:
                    adam_net, new_theta = adam_step(adam_net, net.flatten(netp), theta_grad)
                    netp = net.unflatten(netp.layer_dims, new_theta, seed=netp.seed)
                except NonFiniteGradient as err:
                    log.warning("epoch %d: skipping network update: %s", epoch, err)
                if joint:
                    try:
                        adam_mesh, new_p = adam_step(adam_mesh, mesh_to_params(coarse), mesh_g)
                        coarse = params_to_mesh(coarse, new_p)
                    except NonFiniteGradient as err:
                        log.warning("epoch %d: skipping mesh update: %s", epoch, err)
            if config.test_alphas:
                per_alpha = []
                for alpha in config.test_alphas:
                    truth = fine_truth(alpha)
                    _, cache, _, _ = loss_forward(
                        coarse, netp, ScenarioParams(alpha), fine_mesh, truth, solve=solve
                    )
                    per_alpha.append(rmse(Field(cache.predictions[:, 0], fine_mesh.shape), truth))
                test_rmse = float(np.mean(per_alpha))
            else:
                test_rmse = float("nan")
            metrics.append(
                EpochMetrics(
                    epoch=epoch,
                    train_loss=float(np.mean(batch_losses)),
                    test_rmse=test_rmse,
                    n_solver_evals=counter.count,
                    mesh_delta=float(np.linalg.norm(mesh_to_params(coarse) - params0)),
                    wall_time=time.perf_counter() - start,
                )
            )
    except SolverError:
        write_metrics_csv(out / "metrics.csv", metrics, incomplete=True)
        raise
    write_metrics_csv(out / "metrics.csv", metrics)
    state = TrainState(coarse, netp, adam_net, adam_mesh, config.epochs)
    write_checkpoint(out / "checkpoint.json", config, state)
    return metrics, state


def predictions_for(
    state_mesh: TensorMesh,
    net_params: net.MlpParams,
    scenario: ScenarioParams,
    fine_mesh: TensorMesh,
    fine_field: Field,
) -> Field:
    """Forward pass of a trained model on one scenario."""
    _, cache, _, _ = loss_forward(state_mesh, net_params, scenario, fine_mesh, fine_field)
    return Field(cache.predictions[:, 0], fine_mesh.shape)


def scale_sweep(
    config: TrainConfig, scales: list[tuple[int, int]]
) -> list[tuple[tuple[int, int], list[EpochMetrics]]]:
    """Train at several (coarse_n, fine_n) resolutions with a shared seed."""
    if not scales:
        raise ConfigError("scales must not be empty")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    rows = ["coarse_n,fine_n," + METRICS_HEADER]
    for coarse_n, fine_n in scales:
        cfg = replace(
            config,
            coarse_n=coarse_n,
            fine_n=fine_n,
            out_dir=str(out / f"scale_{coarse_n}x{fine_n}"),
        )
        metrics, _ = train_run(cfg)
        results.append(((coarse_n, fine_n), metrics))
        for m in metrics:
            rows.append(
                f"{coarse_n},{fine_n},{m.epoch},{float(m.train_loss)!r},"
                f"{float(m.test_rmse)!r},{m.n_solver_evals},{float(m.mesh_delta)!r},"
                f"{float(m.wall_time)!r}"
            )
    (out / "scales.csv").write_text("\n".join(rows) + "\n")
    return results


@dataclass(frozen=True)
class DynamicStep:
    step: int
    alpha: float
    initial_loss: float
    final_loss: float
    n_solver_evals: int


def dynamic_sweep(
    config: TrainConfig, alpha_series, iterations: int = 50
) -> list[DynamicStep]:
    """Track a drifting scenario: per alpha, a short joint optimization that
    warm-starts the network and mesh from the previous step."""
    series = [float(a) for a in alpha_series]
    if not series:
        raise ConfigError("alpha series must not be empty")
    if iterations < 1:
        raise ConfigError(f"iterations must be >= 1, got {iterations}")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    rows = ["step,alpha,initial_train_loss,final_train_loss,n_solver_evals"]
    mesh_state: TensorMesh | None = None
    net_state: net.MlpParams | None = None
    for t, alpha in enumerate(series):
        cfg = replace(
            config,
            train_alphas=(alpha,),
            test_alphas=(),
            epochs=iterations,
            warm_start_epochs=0,
            out_dir=str(out / f"dynamic_{t}"),
        )
        metrics, state = train_run(cfg, init_mesh=mesh_state, init_net=net_state)
        mesh_state, net_state = state.mesh, state.net
        rec = DynamicStep(
            t, alpha, metrics[0].train_loss, metrics[-1].train_loss, metrics[-1].n_solver_evals
        )
        records.append(rec)
        rows.append(
            f"{t},{alpha!r},{rec.initial_loss!r},{rec.final_loss!r},{rec.n_solver_evals}"
        )
    (out / "dynamic.csv").write_text("\n".join(rows) + "\n")
    return records
