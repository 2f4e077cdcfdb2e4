"""
Where do new collocation points go?
===================================

New points are drawn with probability proportional to
max(log(|r| / eps), 0), so residuals below eps are never sampled and the
log keeps a single large residual from taking every draw.
"""
import numpy as np

from porous_pinn.physics import ProblemConfig
from porous_pinn.sampling import build_dense_sets, build_density, draw_points

cfg = ProblemConfig()
dense = build_dense_sets(cfg, (100, 100))
pts = dense.interior.points

# a made-up residual concentrated on the exact front x = sqrt(2 t)
dist = pts[:, 0] - np.sqrt(2 * pts[:, 1])
r = 1e-2 * np.exp(-dist**2 / 0.001) + 1e-6

density = build_density(r, filter_epsilon=1e-4)
print("candidates with zero probability: %d of %d" % (np.sum(density.probabilities == 0), len(r)))

rng = np.random.default_rng(0)
new = draw_points(density, dense.interior, 100, rng)
offset = np.abs(new[:, 0] - np.sqrt(2 * new[:, 1]))
print("distance of the 100 drawn points to the front: median %.3f, max %.3f" % (np.median(offset), offset.max()))

# a crude picture of where the points landed (x across, t down)
canvas = np.full((10, 40), ".")
for x, t in new:
    canvas[min(int(t / cfg.T * 10), 9), min(int(x / cfg.l * 40), 39)] = "o"
print("\n".join("".join(row) for row in canvas))
