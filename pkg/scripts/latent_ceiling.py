"""How well can any latent clustering do at a given latent SNR?

K-means is run directly on the true noisy ``H`` (inlier columns only), once
started from the true centroids and once from K-means++ seeding.  The first
number bounds what a method that recovers ``H`` perfectly can score; the
second shows how much is lost to poor local minima.

    python scripts/latent_ceiling.py --model nmf --trials 10
"""

import argparse

import numpy as np

from jointfac.clustering import kmeans_centroids, kmeans_lloyd
from jointfac.harness.algorithms import instance_rng
from jointfac.metrics import clustering_accuracy
from jointfac.synthgen import SynthParams, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", choices=["nmf", "volmin"], default="nmf")
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--snr1", type=float, default=15.0)
    ap.add_argument("--snr2", type=float, nargs="+", default=[3, 6, 9, 12, 15, 18])
    args = ap.parse_args()
    print(f"{'SNR2':>6} {'truth-init':>11} {'kmeans++':>9}")
    for snr2 in args.snr2:
        oracle, seeded = [], []
        for t in range(args.trials):
            p = SynthParams(model=args.model, snr1_db=args.snr1, snr2_db=snr2,
                            outlier_fraction=0.03)
            gt = generate(p, rng=instance_rng(0, t))
            inl = gt.inliers
            H, y = gt.H[:, inl], gt.labels[inl]
            r = kmeans_lloyd(H, p.K, init=kmeans_centroids(H, y, p.K))
            oracle.append(clustering_accuracy(y, r.labels))
            r = kmeans_lloyd(H, p.K, rng=np.random.default_rng(t))
            seeded.append(clustering_accuracy(y, r.labels))
        print(f"{snr2:>6g} {100 * np.mean(oracle):>11.2f} {100 * np.mean(seeded):>9.2f}")


if __name__ == "__main__":
    main()
