"""Time the spacings convolution against direct summation and the reciprocal KDE."""

import argparse
import time

import numpy as np

from auctionfolio.quantile_core import (
    EPANECHNIKOV,
    BidSample,
    compute_spacings,
    kernel_quantile_density,
    quantile_density_direct,
    reciprocal_kde_quantile_density,
)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="1000,10000,100000,1000000")
    ap.add_argument("--h", type=float, default=0.01)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--direct-max", type=int, default=20_000, help="skip the O(n nh) paths above this size")
    args = ap.parse_args(argv)

    print(f"{'n':>9} {'fft [s]':>10} {'direct [s]':>11} {'recip KDE [s]':>14}")
    for n in (int(x) for x in args.sizes.split(",")):
        s = BidSample.from_bids(np.random.default_rng(n).random(n))
        sp = compute_spacings(s)
        grid = np.arange(1, n) / n
        fft = best_of(lambda: kernel_quantile_density(sp, EPANECHNIKOV, args.h), args.repeat)
        if n <= args.direct_max:
            direct = best_of(lambda: quantile_density_direct(sp.diffs, EPANECHNIKOV, args.h, grid), 1)
            recip = best_of(lambda: reciprocal_kde_quantile_density(s, args.h, grid), 1)
            print(f"{n:>9d} {fft:>10.4f} {direct:>11.4f} {recip:>14.4f}")
        else:
            print(f"{n:>9d} {fft:>10.4f} {'-':>11} {'-':>14}")


if __name__ == "__main__":
    main()
