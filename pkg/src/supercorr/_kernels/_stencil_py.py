"""Pure numpy fallback with the same contract as the compiled ``_stencil``."""
import numpy as np


def pair_cheb_step(v1, v0, out, acc, coef, alpha, diag, U, J, n1, u1, n2, u2):
    # neighbour sums grouped as in the compiled kernel so that the transposed
    # entry adds the same two partial sums (keeps the result exactly symmetric)
    s1 = np.roll(v1, 1, axis=0) + np.roll(v1, -1, axis=0)
    s2 = np.roll(v1, 1, axis=1) + np.roll(v1, -1, axis=1)
    h = diag * v1 - J * (s1 + s2)
    idx = np.arange(v1.shape[0])
    h[idx, idx] -= U * v1[idx, idx]
    h[n1, :] += u1
    h[:, n1] += u1
    h[n2, :] += u2
    h[:, n2] += u2
    np.subtract(alpha * h, v0, out=out)
    acc += coef * out
    # enforce bitwise symmetry (s1 + s2 versus s2 + s1 may round differently)
    iu = np.triu_indices(v1.shape[0], 1)
    out.T[iu] = out[iu]
    acc.T[iu] = acc[iu]
