"""The scalar toy model behind the saturation limits: with an unbounded
amplitude any linear plant is exponentially stabilizable at any rate,
while a bounded amplitude loses every state beyond bound/(-r) when the
plant is unstable.

Run:  python3 demos/07_scalar_saturation_limits.py
"""

import math

import numpy as np

from schloegl import ode_toy_simulate

print("unconstrained feedback: squared state decays exactly at twice the rate")
for r, mu in ((-3.0, 1.0), (2.0, 0.5)):
    t, z = ode_toy_simulate(r=r, bound=math.inf, mu=mu, z0=1.5, horizon=2.0)
    worst = np.max(np.abs(z ** 2 - 1.5 ** 2 * np.exp(-2 * mu * t)))
    print(f"  r={r:+.1f}, mu={mu}: max |z^2 - exact| = {worst:.2e}")

print("\nunstable plant (r = -1) with amplitude bound 1: basin boundary at |z| = 1")
for z0 in (0.4, 0.95, 1.05, 2.0):
    t, z = ode_toy_simulate(r=-1.0, bound=1.0, mu=1.0, z0=z0, horizon=4.0)
    fate = "decays" if abs(z[-1]) < abs(z0) else "GROWS"
    print(f"  z0 = {z0:4.2f}: z(4) = {z[-1]:+9.4f}  ({fate})")
