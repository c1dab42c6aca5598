"""Regenerates ttest_reference.json with scipy.stats.ttest_rel."""
import json
import numpy as np
from scipy import stats

rng = np.random.default_rng(20240611)
cases = []
for i in range(50):
    n = int(rng.integers(2, 60))
    kind = i % 3
    if kind == 0:
        a = rng.normal(80, 10, n)
        b = a - rng.normal(rng.uniform(-3, 6), rng.uniform(0.5, 8), n)
    elif kind == 1:
        a = rng.integers(50, 110, n).astype(float)
        b = rng.integers(50, 110, n).astype(float)
    else:
        a = rng.uniform(0, 1, n)
        b = rng.uniform(0, 1, n) * rng.uniform(0.5, 1.5)
    if np.all(a - b == (a - b)[0]):
        b[0] += 1.0
    case = {"a": a.tolist(), "b": b.tolist(), "df": n - 1}
    for side, name in [("two-sided", "two_sided"), ("greater", "greater"), ("less", "less")]:
        r = stats.ttest_rel(a, b, alternative=side)
        case["t"] = float(r.statistic)
        case["p_" + name] = float(r.pvalue)
    cases.append(case)

with open("ttest_reference.json", "w") as f:
    json.dump(cases, f, indent=1)
    f.write("\n")
