# The four segmentation losses, their gradients, and the plateau schedule.
import numpy as np

from ftu import losses

rng = np.random.default_rng(4)
p = rng.uniform(0.05, 0.95, (8, 8))
y = (rng.random((8, 8)) > 0.5).astype(float)

for name, fn in [("bce", losses.bce), ("dice", losses.soft_dice_loss), ("focal", losses.focal_loss),
                 ("jaccard", losses.jaccard_loss), ("combined", losses.combined_loss)]:
    print(f"{name:9s} {fn(p, y):.6f}")

print("focal gamma=0 minus bce:", losses.focal_loss(p, y, gamma=0) - losses.bce(p, y))

# check one gradient entry against a central difference
h = 1e-4
up, dn = p.copy(), p.copy()
up[0, 0] += h
dn[0, 0] -= h
fd = (losses.combined_loss(up, y) - losses.combined_loss(dn, y)) / (2 * h)
print("combined grad[0,0] analytic %.8f  numeric %.8f" % (losses.loss_gradient(p, y)[0, 0], fd))

state = losses.LrPlateauState(best_metric=0.3)
for epoch in range(1, 9):
    state = losses.lr_plateau_step(state, 0.3)
    print(f"epoch {epoch}: lr {state.current_lr:g}")
