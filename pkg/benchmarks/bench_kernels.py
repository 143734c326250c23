"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--cells N] [--rows N] [--repeat K]

Each kernel runs on identical inputs for every importable backend; the
table shows the best of ``--repeat`` runs and the speedup over Python.
"""

import argparse
import math
import random
import timeit
from array import array

from eopipe.kernels import available_backends

NODATA = -9999.0


def raster_inputs(cells, rng):
    red = array("d", (NODATA if rng.random() < 0.05 else rng.random() for _ in range(cells)))
    nir = array("d", (NODATA if rng.random() < 0.05 else rng.random() for _ in range(cells)))
    return red, nir


def index_inputs(rows, rng):
    cols = {
        "source": array("i", (rng.randrange(2) for _ in range(rows))),
        "satellite": array("i", (rng.randrange(3) for _ in range(rows))),
        "collection": array("i", (rng.randrange(3) for _ in range(rows))),
        "level": array("i", (rng.randrange(2) for _ in range(rows))),
        "time": array("q", (rng.randrange(0, 31_536_000_000) for _ in range(rows))),
    }
    lon = [rng.uniform(5, 10) for _ in range(rows)]
    lat = [rng.uniform(49, 53) for _ in range(rows)]
    cols["min_lon"], cols["min_lat"] = array("d", lon), array("d", lat)
    cols["max_lon"] = array("d", (x + rng.uniform(0, 1) for x in lon))
    cols["max_lat"] = array("d", (y + rng.uniform(0, 1) for y in lat))
    cols["cloud"] = array("d", (rng.uniform(0, 100) for _ in range(rows)))
    return cols


def cases(module, red, nir, cols, rows):
    return {
        "ndvi": lambda: module.ndvi(red, nir, NODATA),
        "classify": lambda: module.classify(red, NODATA, 0.0, 0.2, 0.5),
        "match_rows": lambda: module.match_rows(
            rows, cols["source"], cols["satellite"], cols["collection"], cols["level"], cols["time"],
            cols["min_lon"], cols["min_lat"], cols["max_lon"], cols["max_lat"], cols["cloud"],
            0, True, 1, 20.0, -1, -1, 0, 15_000_000_000, 6.9, 50.9, 7.6, 51.3),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--cells", type=int, default=1_000_000, help="raster cells for ndvi/classify")
    p.add_argument("--rows", type=int, default=100_000, help="index rows for match_rows")
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    rng = random.Random(0)
    red, nir = raster_inputs(args.cells, rng)
    cols = index_inputs(args.rows, rng)
    backends = available_backends()
    timings = {}
    outputs = {}
    for name, module in backends.items():
        for kernel, fn in cases(module, red, nir, cols, args.rows).items():
            timings[name, kernel] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            outputs[name, kernel] = list(fn())

    print(f"cells={args.cells} rows={args.rows} best of {args.repeat}")
    print(f"{'kernel':<12}" + "".join(f"{n:>12}" for n in backends) + f"{'speedup':>10}")
    for kernel in ("ndvi", "classify", "match_rows"):
        row = f"{kernel:<12}" + "".join(f"{timings[n, kernel] * 1000:>10.1f}ms" for n in backends)
        if "cython" in backends:
            row += f"{timings['python', kernel] / timings['cython', kernel]:>9.1f}x"
            same = all(a == b or (math.isnan(a) and math.isnan(b))
                       for a, b in zip(outputs["python", kernel], outputs["cython", kernel]))
            if not same or len(outputs["python", kernel]) != len(outputs["cython", kernel]):
                row += "  OUTPUT MISMATCH"
        print(row)


if __name__ == "__main__":
    main()
