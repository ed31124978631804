"""Sparse direct solves shared by the sub-step solvers."""

import numpy as np
import scipy.sparse.linalg as spla

from .exceptions import SingularSystemError


def solve(A, rhs, symmetric=False):
    """Solve ``A x = rhs`` with SuperLU; raise :class:`SingularSystemError` on failure."""
    # minimum degree on A^T + A with diagonal pivoting is fastest for the
    # symmetric systems here; general matrices use the default column ordering
    if symmetric:
        opts, perm = dict(SymmetricMode=True), "MMD_AT_PLUS_A"
    else:
        opts, perm = {}, "COLAMD"
    try:
        lu = spla.splu(A.tocsc(), permc_spec=perm, options=opts)
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse factorization failed: {exc}") from exc
    x = lu.solve(np.asarray(rhs, dtype=float))
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("sparse solve produced non-finite values")
    return x
