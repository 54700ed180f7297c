"""
Why point forecasts of fundamentals are not enough
==================================================

The day-ahead price comes from a supply stack: a convex, nondecreasing curve
mapping residual load to the marginal price. If tomorrow's residual load is
uncertain, the fair expected price is E[MO(X)], which for a convex curve
exceeds MO(E[X]) - the price you get by plugging in the point forecast.

The demo configuration reproduces that wedge: a 30 GW expected residual load
prices at 92 EUR/MWh through the curve, while the expected price over the
residual-load distribution is around 122 EUR/MWh. A model fed only point
forecasts cannot see the difference; one fed quantile forecasts can.
"""

import numpy as np

from epfq.evalstat import demo_supply_stack, jensen_gap

curve, points, probs = demo_supply_stack()

print("supply stack knots (GW -> EUR/MWh):")
for x, y in zip(curve.knots_x, curve.knots_y):
    print(f"  {x:5.0f} -> {y:8.2f}")

mean_load = float(points @ probs)
mo_of_mean, mean_of_mo = jensen_gap(curve, points, probs)
print(f"\nE[ResLoad]            = {mean_load:.1f} GW")
print(f"MO(E[ResLoad])        = {mo_of_mean:.2f} EUR/MWh   (point forecast price)")
print(f"E[MO(ResLoad)]        = {mean_of_mo:.2f} EUR/MWh and that is the fair price")
print(f"convexity premium     = {mean_of_mo - mo_of_mean:.2f} EUR/MWh")

# The gap closes as the uncertainty collapses: scale the density toward its
# mean and watch the premium vanish.
print("\npremium as uncertainty shrinks:")
for shrink in (1.0, 0.5, 0.25, 0.0):
    pts = mean_load + shrink * (points - mean_load)
    lo, hi = jensen_gap(curve, pts, probs)
    print(f"  spread x{shrink:4.2f}: premium {hi - lo:6.2f} EUR/MWh")

# Jensen's inequality guarantees the premium is never negative for a convex
# curve; a linear stack would price point and distribution identically.
linear_y = np.interp(curve.knots_x, [curve.knots_x[0], curve.knots_x[-1]],
                     [curve.knots_y[0], curve.knots_y[-1]])
from epfq.evalstat import MeritCurve
flat = MeritCurve(curve.knots_x, linear_y)
lo, hi = jensen_gap(flat, points, probs)
print(f"\nsame density through a linear stack: premium {hi - lo:.2e} EUR/MWh")
