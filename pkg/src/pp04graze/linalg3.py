"""Closed-form linear algebra for real 3x3 matrices.

The flow of a piecewise-linear system only ever needs the spectral data of a
single fixed 3x3 operator, so everything here is done by hand: eigenvalues
from the trigonometric form of Cardano's formula, eigenvectors from cross
products of rows of ``m - s*I``, inverses from the adjugate.

Sign convention: :class:`EigenDecomp` stores ``lam`` with the eigenvalues of
``m`` being ``-lam``, so a dissipative operator has positive ``lam``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ComplexOrRepeatedEigenvalues, SingularResolvent

REPEATED_TOL = 1e-9


@dataclass(frozen=True)
class EigenDecomp:
    """Eigendecomposition ``m = U diag(-lam) U^-1``.

    ``lam`` is sorted ascending, so ``lam[0]`` is the slowest decay rate.
    """

    lam: np.ndarray
    U: np.ndarray
    Uinv: np.ndarray

    @property
    def eigenvalues(self) -> np.ndarray:
        return -self.lam

    def reconstruct(self) -> np.ndarray:
        return self.U @ np.diag(-self.lam) @ self.Uinv


def as_mat3(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def det3(m: np.ndarray):
    return (m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
            - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
            + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]))


def adjugate3(m: np.ndarray) -> np.ndarray:
    """Transpose of the cofactor matrix; works for real and complex input."""
    adj = np.empty((3, 3), dtype=np.result_type(m, float))
    for i in range(3):
        for j in range(3):
            r = [k for k in range(3) if k != j]
            c = [k for k in range(3) if k != i]
            minor = m[r[0], c[0]] * m[r[1], c[1]] - m[r[0], c[1]] * m[r[1], c[0]]
            adj[i, j] = minor if (i + j) % 2 == 0 else -minor
    return adj


def inv3(m: np.ndarray) -> np.ndarray:
    det = det3(m)
    scale = float(np.max(np.abs(m))) ** 3
    if det == 0 or abs(det) <= 1e-14 * scale:
        raise np.linalg.LinAlgError("matrix is singular")
    return adjugate3(m) / det


def char_poly(m: np.ndarray) -> tuple[float, float, float]:
    """Coefficients ``(a2, a1, a0)`` of ``det(sI - m) = s^3 + a2 s^2 + a1 s + a0``."""
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    minors = (m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
              + m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
              + m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
    return -tr, minors, -det3(m)


def _real_cubic_roots(a2, a1, a0, scale):
    # depressed cubic t^3 + p t + q with s = t - a2/3
    shift = -a2 / 3.0
    p = a1 - a2 * a2 / 3.0
    q = 2.0 * a2 ** 3 / 27.0 - a2 * a1 / 3.0 + a0
    if p >= -(REPEATED_TOL * scale) ** 2:
        # p >= 0 means at most one real root; p ~ 0 means a triple root
        raise ComplexOrRepeatedEigenvalues(
            f"characteristic polynomial has non-real or repeated roots (p={p:.3e})")
    r = math.sqrt(-p / 3.0)
    arg = -q / (2.0 * r ** 3)
    if abs(arg) > 1.0 + 1e-12:
        raise ComplexOrRepeatedEigenvalues(
            "characteristic polynomial has a complex-conjugate pair of roots")
    phi = math.acos(max(-1.0, min(1.0, arg)))
    roots = [shift + 2.0 * r * math.cos((phi - 2.0 * math.pi * k) / 3.0) for k in range(3)]

    def newton(s):
        for _ in range(3):
            f = ((s + a2) * s + a1) * s + a0
            df = (3.0 * s + 2.0 * a2) * s + a1
            if df == 0.0:
                break
            step = f / df
            s -= step
            if abs(step) <= 1e-17 * max(abs(s), scale):
                break
        return s

    return sorted(newton(s) for s in roots)


def _null_vector(b: np.ndarray) -> np.ndarray:
    rows = (b[0], b[1], b[2])
    best = None
    best_norm = -1.0
    for i, j in ((0, 1), (0, 2), (1, 2)):
        v = np.cross(rows[i], rows[j])
        nv = float(np.linalg.norm(v))
        if nv > best_norm:
            best, best_norm = v, nv
    if best_norm == 0.0:
        raise ComplexOrRepeatedEigenvalues("eigenspace is not one-dimensional")
    v = best / best_norm
    k = int(np.argmax(np.abs(v)))
    return v if v[k] > 0 else -v


def eigen_decompose(m) -> EigenDecomp:
    """Diagonalise a real 3x3 matrix with three distinct real eigenvalues.

    Raises
    ------
    ComplexOrRepeatedEigenvalues
        If the characteristic cubic has non-real roots, or two roots closer
        than ``1e-9`` times the spectral radius.
    """
    m = as_mat3(m)
    a2, a1, a0 = char_poly(m)
    scale = max(float(np.max(np.abs(m))), 1e-300)
    s = _real_cubic_roots(a2, a1, a0, scale)
    radius = max(abs(s[0]), abs(s[2]), 1e-300)
    gaps = (s[1] - s[0], s[2] - s[1])
    if min(gaps) <= REPEATED_TOL * radius:
        raise ComplexOrRepeatedEigenvalues(
            f"repeated eigenvalues {s} (relative gap {min(gaps) / radius:.2e})")
    # eigenvalues of m are s, lam = -s; ascending lam means descending s
    lam = np.array([-s[2], -s[1], -s[0]])
    U = np.column_stack([_null_vector(m + li * np.eye(3)) for li in lam])
    return EigenDecomp(lam=lam, U=U, Uinv=inv3(U))


def expm(m, dt: float, eig: EigenDecomp | None = None) -> np.ndarray:
    """``exp(m * dt)`` through the eigendecomposition."""
    if eig is None:
        eig = eigen_decompose(m)
    if dt == 0.0:
        return np.eye(3)
    return (eig.U * np.exp(-eig.lam * dt)) @ eig.Uinv


def resolvent_apply(m, omega: float, v) -> tuple[np.ndarray, np.ndarray]:
    """Real and imaginary parts of ``(i*omega*I - m)^-1 v``."""
    m = as_mat3(m)
    v = np.asarray(v, dtype=float)
    a = 1j * omega * np.eye(3) - m
    det = det3(a)
    scale = max(float(np.max(np.abs(a))), 1e-300) ** 3
    if abs(det) <= 1e-14 * scale:
        raise SingularResolvent(f"i*{omega}*I - m is singular")
    x = adjugate3(a) @ v / det
    # one step of iterative refinement against the complex system
    x = x + adjugate3(a) @ (v - a @ x) / det
    return x.real.copy(), x.imag.copy()
