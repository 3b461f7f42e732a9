"""Identity replacement by hand, on embeddings small enough to read.

Every sample's identity rows are swapped for the reference's, and its
expression rows are rescaled by the identity-norm ratio so the
identity-to-expression proportion is preserved.
"""

import numpy as np

from storyscale import EmbeddingBatch, EmbeddingBlock, apply_identity_replacement, block_norm

# two samples; the second one's identity embedding drifted (norm 2 instead of 5)
batch = EmbeddingBatch([
    (EmbeddingBlock(np.array([[3.0, 4.0]])), EmbeddingBlock(np.array([[0.5, 0.5]]))),
    (EmbeddingBlock(np.array([[0.0, 2.0]])), EmbeddingBlock(np.array([[1.0, 0.0]]))),
])

print("before:")
for n, (ident, expr) in enumerate(batch.entries, start=1):
    print(f"  sample {n}: identity {ident.tokens.tolist()} (norm {block_norm(ident):g}), "
          f"expression {expr.tokens.tolist()}")

out = apply_identity_replacement(batch)

print("after:")
for n, (ident, expr) in enumerate(out.entries, start=1):
    print(f"  sample {n}: identity {ident.tokens.tolist()}, expression {expr.tokens.tolist()}")

# sample 2's expression was scaled by |ref identity| / |own identity| = 5/2
print("scale factor applied to sample 2's expression:", 5 / 2)

# the proportion between identity and expression magnitude is what survives
for n, ((i0, e0), (i1, e1)) in enumerate(zip(batch.entries, out.entries), start=1):
    before = block_norm(i0) / block_norm(e0)
    after = block_norm(i1) / block_norm(e1)
    print(f"  sample {n}: identity/expression norm ratio {before:.6f} -> {after:.6f}")
