"""
Input derivatives of a small network
====================================

The residuals need c_t, c_x, p_x and v_x at every collocation point.  They
are carried through the forward pass next to the values, so one call gives
all of them.  Here they are checked against central differences.
"""
import numpy as np

from porous_pinn.diffnet import NetworkSpec, forward, forward_with_input_derivatives, init_network

net = init_network(NetworkSpec(hidden_layer_sizes=(20,) * 5), seed=0)

x = np.linspace(0.0, 1.0, 6)
t = np.full_like(x, 0.25)
s = forward_with_input_derivatives(net, x, t)

h = 1e-6
fd_x = (forward(net, x + h, t) - forward(net, x - h, t)) / (2 * h)
fd_t = (forward(net, x, t + h) - forward(net, x, t - h)) / (2 * h)

print("     x      value       d/dx   fd d/dx       d/dt   fd d/dt")
for row in zip(x, s.value, s.d_dx, fd_x, s.d_dt, fd_t):
    print("%6.2f" % row[0] + "".join("%11.6f" % v for v in row[1:]))

print("max |d/dx - fd| = %.2e" % np.max(np.abs(s.d_dx - fd_x)))
print("max |d/dt - fd| = %.2e" % np.max(np.abs(s.d_dt - fd_t)))
