"""Dense symmetric eigensolver (cyclic Jacobi)."""

from __future__ import annotations

import numba
import numpy as np


class EigenSolverError(RuntimeError):
    pass


@numba.njit(cache=True)
def _cyclic_jacobi(a, tol, max_sweeps):
    n = a.shape[0]
    vt = np.eye(n)
    fro = np.sqrt(np.sum(a * a))
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += 2.0 * a[i, j] * a[i, j]
        if np.sqrt(off) <= tol * fro:
            return vt, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                theta = (aqq - app) / (2.0 * apq)
                # smaller root of t^2 + 2 theta t - 1 = 0
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp = a[p]
                rq = a[q]
                for k in range(n):
                    x = rp[k]
                    y = rq[k]
                    rp[k] = c * x - s * y
                    rq[k] = s * x + c * y
                for k in range(n):
                    a[k, p] = rp[k]
                    a[k, q] = rq[k]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = vt[p]
                vq = vt[q]
                for k in range(n):
                    x = vp[k]
                    y = vq[k]
                    vp[k] = c * x - s * y
                    vq[k] = s * x + c * y
    return vt, -1


def jacobi_eigh(a, tol: float = 1e-10, max_sweeps: int = 60):
    """Eigen-decomposition of a real symmetric matrix.

    Sweeps rotations in row-cyclic order until the off-diagonal Frobenius
    norm falls to ``tol`` times the Frobenius norm of ``a``.

    Returns
    -------
    w : (n,) eigenvalues, ascending
    v : (n, n) orthonormal eigenvectors, ``v[:, i]`` pairs with ``w[i]``
    """
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    vt, sweeps = _cyclic_jacobi(a, tol, max_sweeps)
    if sweeps < 0:
        raise EigenSolverError(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], vt[order].T.copy()
