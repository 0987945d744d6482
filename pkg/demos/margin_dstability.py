"""Probabilistic robustness margin of a D-stability requirement.

The plant has three uncertain parameters ranging over a tetrahedron. The
margin search doubles the radius until the comparison fails, then bisects.
"""

import logging
import sys

from robustmc import RngStream, estimate_margin
from robustmc.config import parse_config

logging.basicConfig(level=logging.WARNING, format="%(message)s")

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 42
cfg = parse_config("", "demo1", seed=seed)
params = cfg.margin
print(f"eps={params.epsilon} delta={params.delta} gamma={params.gamma} seed={seed}")

init, final = estimate_margin(cfg.problem, params, RngStream(seed).child(0))
for rec in final.records:
    o = rec.outcome
    print(f"{rec.stage:>9} r={rec.radius:<8g} {o.verdict.name:<12} N={o.trials:<6} K={o.successes}")
print("interval history:", " -> ".join(f"[{a:g}, {b:g}]" for a, b in final.history))
print(f"margin estimate in [{final.a:g}, {final.b:g}] after {final.total_trials} trials")
