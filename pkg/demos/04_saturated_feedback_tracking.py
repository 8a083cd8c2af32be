"""Tracking the unstable equilibrium with the saturated box-average
feedback: a large amplitude budget stabilizes, a small one cannot.

Coarse rendition of the constant-states tracking study (stable root 2
toward the unstable root 0, gain 175, nine actuators).

Run:  python3 demos/04_saturated_feedback_tracking.py
"""

import math

import numpy as np

from schloegl import (
    FeedbackLaw,
    IntegratorConfig,
    SaturationConfig,
    SchloeglParams,
    build_actuator_grid,
    build_fem,
    discretize_actuators,
    fit_decay_rate,
    track_target,
)

fe = build_fem(32, 32, 0.1)
params = SchloeglParams()
cm = discretize_actuators(build_actuator_grid(3, 0.5), fe.mesh)
y0 = np.full(fe.mesh.n_nodes, 2.0)
target0 = np.zeros(fe.mesh.n_nodes)
cfg = IntegratorConfig(dt=2e-3, state_stride=250)

for tag, bound, horizon in (("e^3.5", math.exp(3.5), 5.0), ("e^1", math.exp(1.0), 25.0)):
    law = FeedbackLaw(gain=175.0, saturation=SaturationConfig(bound=bound))
    rec = track_target(y0, target0, law, cm, fe, params, cfg=cfg, horizon=horizon)
    print(f"bound {tag}: |z(0)| = {rec.err_norm[0]:.3f} -> |z({horizon:.0f})| = {rec.err_norm[-1]:.3e}, "
          f"peak amplitude norm {rec.control_norms.max():.3f}")
    if rec.err_norm[-1] < 1e-6:
        mu, window, _ = fit_decay_rate(rec.times, rec.err_norm)
        print(f"  fitted exponential decay rate {mu:.2f} over t in [{window[0]:.2f}, {window[1]:.2f}]")
    else:
        print("  not stabilized: the saturation budget is too small for this gain")
