"""Walk through the two pairwise distributions on a three-instance toy problem.

Run from the repository root:  python demos/01_label_distributions.py
"""

import numpy as np

from dlst.encoder import (
    EncoderConfig,
    compute_label_distribution,
    compute_latent_distribution,
    kl_divergence,
    kl_gradient,
    optimize_latent,
)

np.set_printoptions(precision=4, suppress=True)

# Two instances share a label vector, the third differs in two positions.
Y = np.array([[1, 0],
              [1, 0],
              [0, 1]])

# Student-t weights 1 / (1 + squared distance) are (1, 1/3, 1/3) for the three
# unordered pairs; normalizing over ordered pairs gives 0.3 and 0.1.
Q = compute_label_distribution(Y)
print("Q =\n", Q.probs)

# A hand-picked 1-D layout: the twins coincide, the odd one sits at distance 1.
Z = np.array([[0.0], [0.0], [1.0]])
U = compute_latent_distribution(Z)
print("U =\n", U.probs)
print("KL(Q || U) = %.6f" % kl_divergence(Q, U))

# The gradient pushes the third point further away: U under-weights the twin pair.
print("gradient =\n", kl_gradient(Q, Z))

# Let the optimizer find the layout instead.
res = optimize_latent(Y, EncoderConfig(latent_dim=1, seed=0))
print("optimized codes:", res.codes.codes.ravel())
print("KL went from %.4g to %.4g in %d iterations" % (res.trace[0], res.trace[-1], res.iterations))

# Ratio check: the twin distance is zero and the others equal, so
# 1 / (1 + d^2) must be 1/3, i.e. d = sqrt(2).
z = res.codes.codes.ravel()
print("|z1 - z3| = %.4f (sqrt 2 = %.4f)" % (abs(z[0] - z[2]), np.sqrt(2)))
