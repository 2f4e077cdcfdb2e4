"""
The exact filling solution
==========================

Fluid 2 (viscous) is pushed into fluid 1 (almost inviscid) by a fixed
pressure drop.  The front grows like sqrt(t) and the pressure is piecewise
linear with a kink at the front.
"""
import numpy as np

from porous_pinn.analytic import front_exit_time, front_position, front_velocity, pressure_exact
from porous_pinn.physics import ProblemConfig

cfg = ProblemConfig()
print("front leaves the domain at t = %.6f" % front_exit_time(cfg))

for t in (0.05, 0.125, 0.25, 0.45):
    x_f = front_position(t, cfg)
    print("t = %.3f  x_f = %.7f  sqrt(2t) = %.7f  v = %.4f" % (t, x_f, np.sqrt(2 * t), front_velocity(x_f, cfg)))

# almost all of the pressure drop sits behind the front
x = np.linspace(0, 1, 11)
print("\npressure at t = 0.2")
print(np.round(pressure_exact(x, np.full_like(x, 0.2), cfg), 5))

# with equal viscosities the front moves at constant speed
same = ProblemConfig(mu1=1.0, mu2=1.0)
print("\nequal viscosities, x_f(0.5) =", front_position(0.5, same))
