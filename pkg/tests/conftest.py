"""Shared builders for randomized test data."""

import numpy as np

from hazsieve.core import Dataset, PathRecord, StepFunction


def random_step(rng):
    kind = int(rng.integers(0, 3))
    if kind == 0:
        return StepFunction.indicator(0.0, 1.0)
    a, b = np.sort(rng.uniform(0.05, 0.95, size=2))
    if b - a < 0.05:
        b = min(a + 0.05, 1.0)
    v1, v2 = rng.uniform(0.2, 1.0, size=2)
    if kind == 1:
        return StepFunction.from_triples([(0.0, float(b), float(v1))])
    return StepFunction.from_triples([(0.0, float(a), float(v1)), (float(a), float(b), float(v2))])


def random_events(rng, y, max_events):
    ne = int(rng.integers(0, max_events + 1))
    pieces = [(iv, v) for iv, v in y.pieces if v > 0]
    if not pieces or ne == 0:
        return ()
    lens = np.asarray([iv.length for iv, _ in pieces])
    times = []
    for _ in range(ne):
        k = int(rng.choice(len(pieces), p=lens / lens.sum()))
        iv = pieces[k][0]
        times.append(iv.start + (0.02 + 0.96 * float(rng.uniform())) * iv.length)
    return tuple(sorted(set(times)))


def random_dataset(rng, n, d, max_events=3):
    recs = []
    for i in range(n):
        y = random_step(rng)
        recs.append(
            PathRecord(
                id=i,
                x=tuple(rng.uniform(0.0, 1.0, size=d).tolist()),
                events=random_events(rng, y, max_events),
                at_risk=y,
            )
        )
    return Dataset(d, tuple(recs))
