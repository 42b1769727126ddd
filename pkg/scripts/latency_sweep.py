"""DER breakdown versus latency on synthetic meetings.

Runs the pipeline at each latency on a handful of generated scenarios with
both the oracle and the band-split separator, and writes one CSV row per
(separator, seed, latency) plus a mean row per (separator, latency).

    python scripts/latency_sweep.py --seeds 0 1 2 --out sweep.csv
"""

import argparse
import csv
import sys
import time

import numpy as np

from sepdiar import backends, synth
from sepdiar.backends import BandSplitSeparator, OracleSeparator
from sepdiar.core import PipelineConfig
from sepdiar.metrics import der
from sepdiar.stitch import run_pipeline


def separators(scenario):
    bands = [scenario.bands[k] for k in sorted(scenario.bands)]
    return {
        "oracle": OracleSeparator(scenario.stems, scenario.num_speakers),
        "band-split": BandSplitSeparator(bands),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--speakers", type=int, default=3)
    p.add_argument("--duration", type=float, default=120.0)
    p.add_argument("--overlap-ratio", type=float, default=0.2)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--latencies", type=float, nargs="+", default=[0.5, 1.0, 2.0, 3.0, 4.0, 5.0])
    p.add_argument("--no-context-mapping", action="store_true", help="ablate mapping of context-only channels")
    p.add_argument("--out", default="-")
    args = p.parse_args(argv)

    vad, emb = backends.EnergyVad(-40.0), backends.MelEmbedder()
    rows = []
    for seed in args.seeds:
        sc = synth.generate(args.speakers, args.duration, args.overlap_ratio, seed=seed)
        for name, sep in separators(sc).items():
            for lat in args.latencies:
                cfg = PipelineConfig(latency=lat, map_context=not args.no_context_mapping)
                t0 = time.perf_counter()
                hyp = run_pipeline(sc.stream(), sep, vad, emb, cfg)
                rep = der(sc.annotation, hyp)
                rows.append([name, seed, lat, rep.der, rep.false_alarm, rep.missed, rep.confusion, len(hyp.labels())])
                print(f"{name:10s} seed {seed} L={lat}: DER {100 * rep.der:5.1f}% "
                      f"({len(hyp.labels())} spk, {time.perf_counter() - t0:.1f}s)", file=sys.stderr)

    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["separator", "seed", "latency", "DER", "FA", "MS", "SC", "speakers"])
    writer.writerows(rows)
    for name in ("oracle", "band-split"):
        for lat in args.latencies:
            sel = np.array([r[3:8] for r in rows if r[0] == name and r[2] == lat], dtype=float)
            writer.writerow([name, "mean", lat, *sel.mean(axis=0).tolist()])
    if out is not sys.stdout:
        out.close()


if __name__ == "__main__":
    main()
