"""Time-domain requirement: rise, settling and overshoot limits.

First the nominal step response, then a margin search and a short curve
with a reduced sample size so the whole script runs in well under a minute.
"""

import numpy as np

from robustmc import RngStream, estimate_margin
from robustmc.binom import required_sample_size
from robustmc.config import parse_config
from robustmc.curve import global_strategy
from robustmc.systems import step_response_specs

cfg = parse_config("", "demo2")
num, char = cfg.problem.loop_polys(np.zeros(3))
s = step_response_specs(num[0], char[0], cfg.sim)
print(f"nominal: peak {s['peak']:.4f}, rise {s['rise_time']:.4f}, settling {s['settling_time']:.4f}")

init, final = estimate_margin(cfg.problem, cfg.margin, RngStream(3).child(0))
print(f"margin in [{final.a:g}, {final.b:g}] after {final.total_trials} step responses")

N = required_sample_size(epsilon=0.01, delta=0.01, alpha=0.5)
res = global_strategy(cfg.problem, N, 0.01, 0.01, final.b, 20, RngStream(3).child(1))
last = res.curves[-1].points[-1]
print(f"curve with N={N}: {len(res.curves)} interval(s), {res.generated_samples} fresh samples; "
      f"at r={last.r:g} {last.m2}/{last.m1} samples meet the specs")
