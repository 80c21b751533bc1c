"""Exact identities of the linear item-item model.

A linear model scores items as a weighted sum of the items already in a
user's history.  With a squared-error objective and a ridge penalty the
weight matrix has a closed form, and constraining its diagonal to zero
(so an item cannot recommend itself) only changes that closed form by a
rank correction: one Lagrange multiplier per item.

This script trains the unconstrained and the constrained variants on a
tiny binary dataset and checks four things numerically: the constrained
solution matches a per-column brute-force fit that simply deletes the
offending feature; its diagonal is exactly zero; when input and target
are the same matrix the whole model can be read off the inverse of the
regularized Gram matrix; and the gradient at the constrained optimum is
diagonal, with the multipliers on the diagonal.
"""

import numpy as np
import scipy.sparse as sp

from gramrec import UserItemMatrix, build_gram, solve_ease, solve_rr, solve_zero_diag

rng = np.random.default_rng(0)
n_users, n_items, lam = 60, 8, 2.0

dense = (rng.random((n_users, n_items)) < 0.35).astype(np.float64)
x = UserItemMatrix(matrix=sp.csr_matrix(dense), binarized=True)
stats = build_gram(x, x)

print("Gram diagonal (per-item interaction counts):")
print(np.diag(stats.g).astype(int))

rr = solve_rr(stats, lam=lam)
zd = solve_zero_diag(stats, lam=lam)
print("\nridge diagonal       :", np.round(np.diag(rr.b), 3))
print("constrained diagonal :", np.diag(zd.b))

# brute force: column j refit with feature j removed from the input
brute = np.zeros((n_items, n_items))
for j in range(n_items):
    rest = [i for i in range(n_items) if i != j]
    xs = dense[:, rest]
    a = xs.T @ xs + lam * np.eye(n_items - 1)
    brute[rest, j] = np.linalg.solve(a, xs.T @ dense[:, j])
print("\nmax |closed form - brute force| =", np.max(np.abs(zd.b - brute)))

# identical input and target: the shortcut solver needs only the precision matrix
shortcut = solve_ease(stats, lam=lam)
print("max |general - shortcut|        =", np.max(np.abs(zd.b - shortcut.b)))

# stationarity: the gradient 2(G B - C + lam B) is diagonal at the optimum,
# and minus half its diagonal is the stored multiplier vector
grad = 2.0 * (stats.g @ zd.b - stats.c + lam * zd.b)
off = grad - np.diag(np.diag(grad))
print("\nmax off-diagonal gradient entry =", np.max(np.abs(off)))
print("max |multiplier mismatch|       =", np.max(np.abs(np.diag(grad) / -2.0 - zd.gamma)))
