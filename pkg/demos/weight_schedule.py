"""
=====================================
The super-point weight over training
=====================================

The blend between super-point and point-wise pseudo-label losses starts fully
on super-points and decays in steps.
"""

# %%
from pointmatch.losses import adaptive_weight, combined_pl_loss

for divisor in (32, 16):
    ws = [adaptive_weight(k, alpha=1.0, divisor=divisor) for k in range(160)]
    steps = [(k, w) for k, w in enumerate(ws) if k == 0 or w != ws[k - 1]]
    print(f"divisor {divisor}: " + ", ".join(f"epoch {k} -> {w:.3f}" for k, w in steps))

# %%
# Blending two loss values at a few weights. Equal inputs come back
# unchanged for any weight.

for w in (1.0, 0.5, 1 / 3, 0.0):
    print(f"w={w:.3f}: L_pl=0.8, L_sp=0.2 -> {combined_pl_loss(0.8, 0.2, w):.4f}, "
          f"both 0.3 -> {combined_pl_loss(0.3, 0.3, w)!r}")
