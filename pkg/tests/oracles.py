"""Independent reference implementations used only by tests."""

import itertools

import numpy as np

from sepdiar.core import Annotation


def raster_der(reference: Annotation, hypothesis: Annotation, resolution: float = 0.001):
    """DER by sampling on a fixed grid and brute-forcing the speaker map.

    Returns (der, fa, ms, sc) as fractions. Exact for annotations whose
    boundaries are multiples of ``resolution``.
    """
    end = max([s.end for s, _ in reference] + [s.end for s, _ in hypothesis] + [0.0])
    n = int(round(end / resolution))

    def tracks(ann):
        out = {}
        for seg, label in ann:
            row = out.setdefault(label, np.zeros(n, dtype=bool))
            row[int(round(seg.start / resolution)) : int(round(seg.end / resolution))] = True
        return out

    ref, hyp = tracks(reference), tracks(hypothesis)
    n_ref = sum(r.astype(int) for r in ref.values()) if ref else np.zeros(n, int)
    n_hyp = sum(h.astype(int) for h in hyp.values()) if hyp else np.zeros(n, int)
    total = n_ref.sum()
    ms = np.maximum(n_ref - n_hyp, 0).sum()
    fa = np.maximum(n_hyp - n_ref, 0).sum()
    hyp_labels, ref_labels = sorted(hyp), sorted(ref)
    best = 0
    slots = ref_labels + [None] * len(hyp_labels)
    for choice in itertools.permutations(slots, len(hyp_labels)):
        score = sum((hyp[h] & ref[r]).sum() for h, r in zip(hyp_labels, choice) if r is not None)
        best = max(best, score)
    sc = np.minimum(n_ref, n_hyp).sum() - best
    return (fa + ms + sc) / total, fa / total, ms / total, sc / total


def plain_si_sdr(est, ref):
    est = np.asarray(est, float)
    ref = np.asarray(ref, float)
    target = (est @ ref) / (ref @ ref) * ref
    noise = est - target
    return 10 * np.log10((target @ target) / (noise @ noise))


def exhaustive_best(estimates, references):
    """Best mean SI-SDR over every injective estimate->reference assignment, by recursion."""
    best = (-np.inf, None)

    def walk(j, used, acc, chosen):
        nonlocal best
        if j == len(references):
            mean = acc / len(references)
            if mean > best[0]:
                best = (mean, tuple(chosen))
            return
        for i in range(len(estimates)):
            if i not in used:
                walk(j + 1, used | {i}, acc + plain_si_sdr(estimates[i], references[j]), chosen + [i])

    walk(0, frozenset(), 0.0, [])
    return best
