"""How the NAB score rewards early detections and penalizes late or stray ones."""

import numpy as np

from rsmgan.evaluation import nab_breakdown, point_metrics
from rsmgan.mts import AnomalyWindow

T = 400
windows = [AnomalyWindow(100, 139), AnomalyWindow(300, 319)]


def show(name, hits):
    flags = np.zeros(T, dtype=bool)
    flags[list(hits)] = True
    b = nab_breakdown(flags, windows)
    m = point_metrics(flags, windows)
    per_window = ", ".join(f"{s:+.3f}" for s in b.window_scores)
    print(f"{name:<28} windows [{per_window}]  fp {sum(b.fp_scores):+.3f}  nab {b.score:+.3f}  f1 {m.f1:.3f}")


show("detect both at start", [100, 300])
show("detect both at the end", [139, 319])
show("miss the second window", [100])
show("no detections", [])
show("one stray point far away", [100, 300, 20])
show("trailing points after window", [100, 300, 140, 141, 142])
show("flag everything", range(T))
