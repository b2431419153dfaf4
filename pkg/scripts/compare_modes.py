"""Train the same problem under every mesh mode and tabulate the outcome.

Runs frozen, exact and the three estimator kinds with a shared schedule and
seed, then prints final/best test RMSE and the solver-call budget per mode.
"""
import argparse
from pathlib import Path

from zo_meshopt.train import TrainConfig, train_run
from zo_meshopt.zo import EstimatorSpec

MODES = ("frozen", "exact", "coordinate", "gaussian", "gauss_coord")
ZO_KINDS = MODES[2:]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/compare", help="parent output directory")
    ap.add_argument("--fine-n", type=int, default=33)
    ap.add_argument("--coarse-n", type=int, default=9)
    ap.add_argument("--epochs", type=int, default=450)
    ap.add_argument("--warm-start", type=int, default=300)
    ap.add_argument("--lr", type=float, default=1e-2)
    ap.add_argument("--mesh-lr", type=float, default=7e-4)
    ap.add_argument("--mu", type=float, default=1e-3)
    ap.add_argument("--b", type=int, default=8)
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--est-seed", type=int, default=0)
    args = ap.parse_args(argv)

    print(f"{'mode':<12} {'final rmse':>12} {'best rmse':>12} {'solves':>8}")
    for mode in MODES:
        kw = dict(
            fine_n=args.fine_n,
            coarse_n=args.coarse_n,
            mesh_mode=mode,
            epochs=args.epochs,
            warm_start_epochs=args.warm_start,
            lr=args.lr,
            mesh_lr=args.mesh_lr,
            seed=args.seed,
            out_dir=str(Path(args.out) / mode),
        )
        if mode in ZO_KINDS:
            kw["estimator"] = EstimatorSpec(
                kind=mode, mu=args.mu, b=args.b, d=args.d, seed=args.est_seed
            )
        metrics, _ = train_run(TrainConfig(**kw))
        best = min(m.test_rmse for m in metrics)
        print(f"{mode:<12} {metrics[-1].test_rmse:>12.4e} {best:>12.4e} "
              f"{metrics[-1].n_solver_evals:>8d}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
