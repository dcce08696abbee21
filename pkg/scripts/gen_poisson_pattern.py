#!/usr/bin/env python3
"""Regenerate the frozen shadow-tap pattern embedded in render/shadow.py.

Progressive best-candidate (Mitchell) sampling in the unit disk, seeded, so
any prefix of the list is itself a well-spread tap set.  Run and paste the
output over POISSON_DISK_64 if the pattern ever needs to change.
"""

import numpy as np


def best_candidate_disk(n=64, candidates=256, seed=20240817):
    rng = np.random.default_rng(seed)
    pts = [np.zeros(2)]
    while len(pts) < n:
        r = np.sqrt(rng.uniform(0, 1, candidates))
        th = rng.uniform(0, 2 * np.pi, candidates)
        cand = np.column_stack([r * np.cos(th), r * np.sin(th)])
        d = np.min(np.linalg.norm(cand[:, None, :] - np.asarray(pts)[None], axis=2), axis=1)
        pts.append(cand[np.argmax(d)])
    return np.asarray(pts)


if __name__ == "__main__":
    pts = best_candidate_disk()
    print("POISSON_DISK_64 = np.array([")
    for x, y in pts:
        print(f"    [{x: .8f}, {y: .8f}],")
    print("])")
