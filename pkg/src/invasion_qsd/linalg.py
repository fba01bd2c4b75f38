"""Dense linear algebra over float64: LU solves and real-matrix eigenvalues.

The eigenvalue routine is the classic two-stage scheme: Householder
reduction to upper Hessenberg form followed by Francis double-shift QR.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConvergenceError


class SingularMatrixError(ArithmeticError):
    pass


def lu_factor(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """LU decomposition with partial pivoting; returns (packed LU, pivot rows)."""
    lu = np.array(a, dtype=float, copy=True)
    n = lu.shape[0]
    if lu.shape != (n, n):
        raise ValueError("matrix must be square")
    piv = np.arange(n)
    scale = np.abs(lu).max() if n else 0.0
    for j in range(n):
        p = j + int(np.argmax(np.abs(lu[j:, j])))
        if lu[p, j] == 0.0 or abs(lu[p, j]) <= 1e-300 * max(scale, 1.0):
            raise SingularMatrixError(f"zero pivot in column {j}")
        if p != j:
            lu[[j, p]] = lu[[p, j]]
            piv[[j, p]] = piv[[p, j]]
        lu[j + 1 :, j] /= lu[j, j]
        lu[j + 1 :, j + 1 :] -= np.outer(lu[j + 1 :, j], lu[j, j + 1 :])
    return lu, piv


def lu_solve(factors: tuple[np.ndarray, np.ndarray], b: np.ndarray) -> np.ndarray:
    lu, piv = factors
    x = np.array(b, dtype=float)[piv]
    n = lu.shape[0]
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1 :] @ x[i + 1 :]) / lu[i, i]
    return x


def lu_solve_transposed(factors: tuple[np.ndarray, np.ndarray], b: np.ndarray) -> np.ndarray:
    """Solve ``A.T x = b`` reusing the factors of ``A``."""
    lu, piv = factors
    n = lu.shape[0]
    y = np.array(b, dtype=float)
    # U.T z = b
    for i in range(n):
        y[i] = (y[i] - lu[:i, i] @ y[:i]) / lu[i, i]
    # L.T w = z
    for i in range(n - 2, -1, -1):
        y[i] -= lu[i + 1 :, i] @ y[i + 1 :]
    x = np.empty(n)
    x[piv] = y
    return x


def solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return lu_solve(lu_factor(a), b)


def hessenberg(a: np.ndarray) -> np.ndarray:
    """Upper Hessenberg matrix similar to ``a`` via Householder reflections."""
    h = np.array(a, dtype=float, copy=True)
    n = h.shape[0]
    for j in range(n - 2):
        x = h[j + 1 :, j]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        v[0] += math.copysign(alpha, x[0])
        v /= np.linalg.norm(v)
        h[j + 1 :, j:] -= 2.0 * np.outer(v, v @ h[j + 1 :, j:])
        h[:, j + 1 :] -= 2.0 * np.outer(h[:, j + 1 :] @ v, v)
        h[j + 2 :, j] = 0.0
    return h


def hessenberg_eigenvalues(h: np.ndarray, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR.

    Deflates one or two eigenvalues at a time from the bottom of the active
    window; exceptional shifts are applied after 10 and 20 stalled sweeps.
    """
    a = np.array(h, dtype=float, copy=True)
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    anorm = float(np.abs(np.triu(a, -1)).sum())
    nn = n - 1
    shift = 0.0
    its = 0
    while nn >= 0:
        # look for a negligible subdiagonal element
        l = nn
        while l >= 1:
            s = abs(a[l - 1, l - 1]) + abs(a[l, l])
            if s == 0.0:
                s = anorm
            if abs(a[l, l - 1]) + s == s:
                a[l, l - 1] = 0.0
                break
            l -= 1
        x = a[nn, nn]
        if l == nn:
            wr[nn] = x + shift
            wi[nn] = 0.0
            nn -= 1
            its = 0
            continue
        y = a[nn - 1, nn - 1]
        w = a[nn, nn - 1] * a[nn - 1, nn]
        if l == nn - 1:
            p = 0.5 * (y - x)
            q = p * p + w
            z = math.sqrt(abs(q))
            x += shift
            if q >= 0.0:
                z = p + math.copysign(z, p)
                wr[nn - 1] = wr[nn] = x + z
                if z != 0.0:
                    wr[nn] = x - w / z
                wi[nn - 1] = wi[nn] = 0.0
            else:
                wr[nn - 1] = wr[nn] = x + p
                wi[nn - 1] = -z
                wi[nn] = z
            nn -= 2
            its = 0
            continue
        if its == max_sweeps:
            raise ConvergenceError("QR iteration did not converge")
        if its in (10, 20):
            shift += x
            a[np.arange(nn + 1), np.arange(nn + 1)] -= x
            s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
            x = y = 0.75 * s
            w = -0.4375 * s * s
        its += 1
        # find two consecutive small subdiagonal elements
        mm = nn - 2
        while True:
            z = a[mm, mm]
            r = x - z
            s = y - z
            p = (r * s - w) / a[mm + 1, mm] + a[mm, mm + 1]
            q = a[mm + 1, mm + 1] - z - r - s
            r = a[mm + 2, mm + 1]
            s = abs(p) + abs(q) + abs(r)
            p /= s
            q /= s
            r /= s
            if mm == l:
                break
            u = abs(a[mm, mm - 1]) * (abs(q) + abs(r))
            v = abs(p) * (abs(a[mm - 1, mm - 1]) + abs(z) + abs(a[mm + 1, mm + 1]))
            if u + v == v:
                break
            mm -= 1
        for i in range(mm + 2, nn + 1):
            a[i, i - 2] = 0.0
            if i != mm + 2:
                a[i, i - 3] = 0.0
        # double-shift QR step on rows/columns l..nn, chasing the bulge
        for k in range(mm, nn):
            if k != mm:
                p = a[k, k - 1]
                q = a[k + 1, k - 1]
                r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                x = abs(p) + abs(q) + abs(r)
                if x != 0.0:
                    p /= x
                    q /= x
                    r /= x
            s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
            if s == 0.0:
                continue
            if k == mm:
                if l != mm:
                    a[k, k - 1] = -a[k, k - 1]
            else:
                a[k, k - 1] = -s * x
            p += s
            x = p / s
            y = q / s
            z = r / s
            q /= p
            r /= p
            cols = slice(k, nn + 1)
            if k != nn - 1:
                pv = a[k, cols] + q * a[k + 1, cols] + r * a[k + 2, cols]
                a[k + 2, cols] -= pv * z
            else:
                pv = a[k, cols] + q * a[k + 1, cols]
            a[k + 1, cols] -= pv * y
            a[k, cols] -= pv * x
            rows = slice(l, min(nn, k + 3) + 1)
            if k != nn - 1:
                pv = x * a[rows, k] + y * a[rows, k + 1] + z * a[rows, k + 2]
                a[rows, k + 2] -= pv * r
            else:
                pv = x * a[rows, k] + y * a[rows, k + 1]
            a[rows, k + 1] -= pv * q
            a[rows, k] -= pv
    return wr + 1j * wi


def eigenvalues(a: np.ndarray) -> np.ndarray:
    """All eigenvalues of a real square matrix (unsorted, complex dtype)."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    return hessenberg_eigenvalues(hessenberg(a))
