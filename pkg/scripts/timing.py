"""Per-fold wall-clock of the GCN pipeline (graph stage vs training stage) against the SVD baseline."""
import argparse

from tabgraph.data import load_csv, synth_blobs
from tabgraph.evaluation import CVConfig, run_cv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", help="CSV input; the blob fixture when omitted")
    ap.add_argument("--label-column", default="label")
    ap.add_argument("--k", type=int, default=10)
    args = ap.parse_args()

    ds = load_csv(args.data, args.label_column) if args.data else synth_blobs(120, 50, 3, 8.0, 7)
    print("method,graph_seconds,train_seconds,total_seconds")
    for method in ("gcn", "svd-lr"):
        # jobs=1 keeps stage timings comparable with the total
        rep = run_cv(ds, CVConfig(k=args.k, method=method, jobs=1))
        agg = rep.aggregate
        print(f"{method},{agg['graph_seconds']['mean']:.4f},{agg['train_seconds']['mean']:.4f},"
              f"{rep.total_seconds:.4f}")


if __name__ == "__main__":
    main()
