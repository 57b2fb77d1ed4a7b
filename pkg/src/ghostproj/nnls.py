"""Lawson-Hanson active-set solver for ``min ||A x - b||  s.t.  x >= 0``.

The passive-set least-squares subproblems are solved from a QR factorization
of the passive columns that is updated in place: appending a column costs one
reorthogonalized Gram-Schmidt step, deleting one costs a sweep of Givens
rotations. Each outer iteration is therefore O(m n') rather than O(m n'^2).
"""

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NNLSIterationError, ValidationError


def kkt_scale(A, b):
    """Magnitude bound for the gradient ``A^T (A x - b)`` at ``x = 0``."""
    s = float(np.abs(A).max(initial=0.0)) * float(np.abs(b).sum())
    return s if s > 0 else 1.0


class _PassiveQR:
    """Thin QR of an ordered subset of the columns of ``A``.

    ``qt`` stores Q transposed so each orthonormal vector is a contiguous row.
    ``qtb`` tracks ``Q^T b`` through every update.
    """

    def __init__(self, At, b):
        self.At = At
        self.b = b
        n, m = At.shape
        cap = min(m, n) + 1
        self.qt = np.zeros((cap, m))
        self.r = np.zeros((cap, cap))
        self.qtb = np.zeros(cap)
        self.cols = []

    def __len__(self):
        return len(self.cols)

    def append(self, j):
        k = len(self.cols)
        if k >= self.qt.shape[0] - 1:
            return False
        a = self.At[j]
        q = self.qt[:k]
        c1 = q @ a
        v = a - c1 @ q
        c2 = q @ v
        v -= c2 @ q
        rho = np.linalg.norm(v)
        if rho <= 1e-12 * np.linalg.norm(a):
            return False
        self.qt[k] = v / rho
        self.r[:k, k] = c1 + c2
        self.r[k, k] = rho
        self.qtb[k] = self.qt[k] @ self.b
        self.cols.append(j)
        return True

    def remove(self, pos):
        k = len(self.cols)
        r = self.r
        # shift columns left, leaving an upper Hessenberg block
        r[:k, pos : k - 1] = r[:k, pos + 1 : k]
        r[:k, k - 1] = 0.0
        for i in range(pos, k - 1):
            a, b = r[i, i], r[i + 1, i]
            rho = np.hypot(a, b)
            if rho == 0.0:
                continue
            c, s = a / rho, b / rho
            ri = r[i, i:k - 1].copy()
            rj = r[i + 1, i:k - 1]
            r[i, i:k - 1] = c * ri + s * rj
            r[i + 1, i:k - 1] = -s * ri + c * rj
            r[i + 1, i] = 0.0
            qi = self.qt[i].copy()
            self.qt[i] = c * qi + s * self.qt[i + 1]
            self.qt[i + 1] = -s * qi + c * self.qt[i + 1]
            ti = self.qtb[i]
            self.qtb[i] = c * ti + s * self.qtb[i + 1]
            self.qtb[i + 1] = -s * ti + c * self.qtb[i + 1]
        r[k - 1, : k] = 0.0
        self.qt[k - 1] = 0.0
        self.qtb[k - 1] = 0.0
        del self.cols[pos]

    def solve(self):
        k = len(self.cols)
        if k == 0:
            return np.zeros(0)
        return solve_triangular(self.r[:k, :k], self.qtb[:k], check_finite=False)


def solve_nnls(M, target, tol=1e-10, max_iter=None, trace=None):
    """Non-negative least squares by the Lawson-Hanson active-set method.

    Parameters
    ----------
    M : array_like, shape (m, n)
    target : array_like, shape (m,)
    tol : float
        Relative KKT tolerance. A zero-weight column may enter only while its
        descent direction ``M^T (target - M w)`` exceeds ``tol * kkt_scale``.
    max_iter : int, optional
        Cap on outer (column-entering) iterations, default ``10 * n``.
    trace : list, optional
        If given, the residual norm after each outer iteration is appended.

    Returns
    -------
    weights : ndarray, shape (n,)
    residual_norm : float

    Raises
    ------
    NNLSIterationError
        When the cap is hit; carries the last feasible iterate.
    """
    A = np.asarray(M, dtype=np.float64)
    b = np.asarray(target, dtype=np.float64)
    if A.ndim != 2:
        raise ValidationError("M must be a 2D matrix", "M")
    m, n = A.shape
    if b.shape != (m,):
        raise ValidationError(f"target has shape {b.shape}, expected ({m},)", "target")
    if not tol > 0:
        raise ValidationError("tol must be positive", "tol")
    if max_iter is None:
        max_iter = 10 * max(n, 1)

    thresh = tol * kkt_scale(A, b)
    # columns as contiguous rows: fast gathers and gemv
    At = np.ascontiguousarray(A.T)
    x = np.zeros(n)
    qr = _PassiveQR(At, b)
    resid = b.copy()
    dual = At @ resid
    rnorm = float(np.linalg.norm(resid))
    if trace is not None:
        trace.append(rnorm)

    blocked = np.zeros(n, dtype=bool)
    iterations = 0
    while True:
        cand = np.where(blocked, -np.inf, dual)
        cand[qr.cols] = -np.inf
        t = int(np.argmax(cand)) if n else 0
        if n == 0 or not cand[t] > thresh:
            break
        if iterations >= max_iter:
            raise NNLSIterationError(
                f"NNLS did not converge within {max_iter} iterations", x.copy(), rnorm, iterations
            )
        iterations += 1

        if not qr.append(t):
            blocked[t] = True
            continue
        z = qr.solve()
        if z[-1] <= 0.0:
            # entering column cannot carry positive weight (rounding); skip it
            qr.remove(len(qr) - 1)
            blocked[t] = True
            continue

        while z.size and z.min() <= 0.0:
            cols = np.array(qr.cols)
            xp = x[cols]
            neg = z <= 0.0
            ratios = np.full(z.size, np.inf)
            ratios[neg] = xp[neg] / (xp[neg] - z[neg])
            alpha = ratios.min()
            ties = np.flatnonzero(ratios == alpha)
            blocker = ties[np.argmin(cols[ties])]
            xp = xp + alpha * (z - xp)
            xp[blocker] = 0.0
            x[cols] = xp
            drop = np.flatnonzero(xp <= 0.0)
            for pos in sorted(drop, reverse=True):
                x[cols[pos]] = 0.0
                qr.remove(int(pos))
            z = qr.solve()

        x[:] = 0.0
        x[qr.cols] = z
        resid = b - z @ At[qr.cols]
        dual = At @ resid
        rnorm = float(np.linalg.norm(resid))
        blocked[:] = False
        if trace is not None:
            trace.append(rnorm)

    return x, rnorm
