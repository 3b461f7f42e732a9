"""The attention hook in slow motion: keys, values, and the shared alphas.

The conditional pass replaces every follower's keys with the reference's
and pulls its values toward the reference by alpha = lambda * cosine.
The unconditional pass repeats the transformation with the *recorded*
alphas so classifier-free guidance stays balanced.
"""

import numpy as np

from storyscale import AlphaLedger, GuidanceConfig, compute_alpha
from storyscale.guidance import inject_style_conditional, inject_style_unconditional
from storyscale.model import AttentionState

rng = np.random.default_rng(7)


def states(branch):
    return [
        AttentionState(branch=branch, step=2, layer=0, sample_index=i,
                       q=rng.standard_normal((1, 3, 4)),
                       k=rng.standard_normal((1, 3, 4)),
                       v=rng.standard_normal((1, 3, 4)))
        for i in range(3)
    ]


config = GuidanceConfig(lam=0.85)
ledger = AlphaLedger()

cond = states("cond")
reference_k = cond[0].k.copy()
reference_v = cond[0].v.copy()

print("alpha for each follower is lambda times the value-cosine:")
for st in cond[1:]:
    print(f"  sample {st.sample_index}: alpha = {compute_alpha(cond[0].v, st.v, 0.85):.4f}")

inject_style_conditional(cond, config, ledger)

print("after injection:")
print("  reference K unchanged:", np.array_equal(cond[0].k, reference_k))
print("  reference V unchanged:", np.array_equal(cond[0].v, reference_v))
for st in cond[1:]:
    print(f"  sample {st.sample_index} K now equals reference K:",
          np.array_equal(st.k, reference_k))

# the unconditional branch consumes the ledger; it never recomputes alphas
uncond = states("uncond")
inject_style_unconditional(uncond, ledger)
for st in uncond[1:]:
    recorded = ledger.lookup(2, 0, st.sample_index)
    print(f"  uncond sample {st.sample_index} used recorded alpha {recorded:.4f}: "
          f"{st.recorded_alpha == recorded}")

# orthogonal values make alpha collapse to zero: full replacement
a = np.zeros((1, 1, 2)); a[0, 0, 0] = 1.0
b = np.zeros((1, 1, 2)); b[0, 0, 1] = 1.0
print("orthogonal-value alpha:", compute_alpha(a, b, 0.85))
