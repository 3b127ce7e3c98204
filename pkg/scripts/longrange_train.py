"""Train DBGNN and the equal-depth mpnn_sigma baseline on the long-range distance task.

Prints train/val R2 every ``--log-every`` epochs.

    python3 scripts/longrange_train.py --steps 2000 --lr 3e-3
"""
import argparse
import math
import time

from dbgnn.model import DBGNN, DBGNNConfig
from dbgnn.train import TrainConfig, evaluate, make_longrange_task, train


def run(kind, task, args):
    cfg = DBGNNConfig.desk(spread=args.spread, oscillatory_init=not args.no_osc, activation=args.activation,
                           layer_kind=kind, T=args.T, K=args.K, d_n_hidden=args.hidden, d_e_hidden=args.hidden)
    model = DBGNN.init(cfg, args.seed)
    per_epoch = math.ceil(len(task.splits["train"]) / args.batch_size)
    epochs = max(1, round(args.steps / per_epoch))
    t0 = time.perf_counter()

    def log(row):
        if row["epoch"] % args.log_every == 0:
            tr = evaluate(model, task, "train")
            print(f"{kind:11s} epoch {row['epoch']:5d} loss {row['train_loss']:.5f} train R2 {tr['r2']:.4f} "
                  f"val R2 {row['metric']:.4f} lr {row['lr']:.2e} {time.perf_counter() - t0:.0f}s", flush=True)

    tc = TrainConfig(epochs=epochs, batch_size=args.batch_size, max_lr=args.lr, final_div=args.final_div,
                     eval_every=args.log_every, seed=args.seed)
    rep = train(model, task, tc, on_epoch=log)
    print(f"{kind}: {epochs * per_epoch} steps, best epoch {rep.best_epoch}, "
          + ", ".join(f"{k}={v:.4f}" for k, v in sorted(rep.final.items())))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--lr", type=float, default=3e-3)
    ap.add_argument("--final-div", type=float, default=1e4)
    ap.add_argument("--batch-size", type=int, default=11)
    ap.add_argument("--spread", type=float, default=0.1)
    ap.add_argument("--no-osc", action="store_true")
    ap.add_argument("--activation", default="tanh")
    ap.add_argument("--K", type=int, default=2)
    ap.add_argument("--T", type=int, default=16)
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--n-graphs", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--log-every", type=int, default=50)
    ap.add_argument("--skip-baseline", action="store_true")
    args = ap.parse_args()
    task = make_longrange_task("distance_regression", "path", args.size, args.n_graphs, args.seed)
    run("db", task, args)
    if not args.skip_baseline:
        run("mpnn_sigma", task, args)


if __name__ == "__main__":
    main()
