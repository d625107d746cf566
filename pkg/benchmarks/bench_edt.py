"""Compare the compiled and numpy EDT kernels, and time evaluate_pair at CT size.

    python3 benchmarks/bench_edt.py [--repeat 3] [--skip-full]
"""

import argparse
import time

import numpy as np

from priorseg import _edt_py
from priorseg.metrics import evaluate_pair
from priorseg.nifti_io import LabelMap
from priorseg.phantom import ellipsoid

try:
    from priorseg import _edt_cy
except ImportError:
    _edt_cy = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--skip-full", action="store_true", help="skip the 512x512x300 evaluate_pair timing")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    spacing = (0.98, 0.98, 5.0)
    print(f"{'grid':>14} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for shape in ((32, 32, 32), (64, 64, 96), (128, 128, 96)):
        fg = rng.random(shape) < 0.001
        t_py = best_of(lambda: _edt_py.edt_sq(fg, spacing), args.repeat)
        if _edt_cy is None:
            print(f"{'x'.join(map(str, shape)):>14} {t_py:10.3f} {'n/a':>10} {'':>8}")
            continue
        t_cy = best_of(lambda: _edt_cy.edt_sq(fg, spacing), args.repeat)
        same = np.array_equal(_edt_py.edt_sq(fg, spacing), _edt_cy.edt_sq(fg, spacing))
        print(f"{'x'.join(map(str, shape)):>14} {t_py:10.3f} {t_cy:10.3f} {t_py / t_cy:7.1f}x" + ("" if same else "  MISMATCH"))

    if not args.skip_full:
        dims = (512, 512, 300)
        gt = LabelMap.from_array(ellipsoid(dims, spacing, (256, 256, 150), (250, 250, 750)).astype(np.uint8), spacing)
        pred = LabelMap.from_array(ellipsoid(dims, spacing, (260, 250, 148), (240, 245, 740)).astype(np.uint8), spacing)
        t = best_of(lambda: evaluate_pair(gt, pred), 1)
        print(f"evaluate_pair 512x512x300, masks spanning the grid: {t:.2f} s")


if __name__ == "__main__":
    main()
