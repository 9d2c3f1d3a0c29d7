"""The PP04 glacial-cycle model written as a linear Filippov system.

    dX/dt = L X + b(region) + I(t) e,    F(X) = c.X + d

with ``X = (V, A, C)``, region ``PLUS`` when ``F > 0`` (glacial) and ``MINUS``
when ``F < 0`` (interglacial), and ``I(t)`` a finite sum of sinusoids.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import linalg3
from .errors import OutOfRange


class Region(enum.IntEnum):
    """Side of the switching surface; the value is the sign of F."""

    PLUS = 1
    MINUS = -1

    @property
    def other(self) -> "Region":
        return Region.MINUS if self is Region.PLUS else Region.PLUS


@dataclass(frozen=True)
class ModelParams:
    """PP04 constants.

    Time constants are in kyr. ``delta = 0.4`` is the value of the original
    PP04 model; with it the published grazing times, orbit anchors and
    unforced period are reproduced.
    """

    tau_V: float = 15.0
    tau_A: float = 12.0
    tau_C: float = 5.0
    x: float = 1.3
    y: float = 0.5
    z: float = 0.8
    alpha: float = 0.15
    beta: float = 0.5
    gamma: float = 0.7
    delta: float = 0.4
    a: float = 0.3
    b: float = 0.7
    d: float = 0.27
    eta: float = 1500.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise OutOfRange(f"{f.name} must be finite, got {v}", key=f.name)
        for name in ("tau_V", "tau_A", "tau_C", "eta"):
            if getattr(self, name) <= 0:
                raise OutOfRange(f"{name} must be > 0, got {getattr(self, name)}", key=name)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ForcingTerm:
    mu: float
    omega: float
    phase: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.omega) and math.isfinite(self.phase)):
            raise OutOfRange("forcing term must be finite", key="forcing")
        if self.omega <= 0:
            raise OutOfRange(f"omega must be > 0, got {self.omega}", key="omega")


@dataclass(frozen=True)
class Forcing:
    """Insolation ``I(t) = sum_k mu_k sin(omega_k t + phase_k)``."""

    terms: tuple[ForcingTerm, ...] = ()

    @classmethod
    def single(cls, mu: float, omega: float, phase: float = 0.0) -> "Forcing":
        return cls((ForcingTerm(mu, omega, phase),))

    @classmethod
    def of(cls, *pairs) -> "Forcing":
        """``Forcing.of((mu1, omega1), (mu2, omega2), ...)``."""
        return cls(tuple(ForcingTerm(*p) for p in pairs))

    def __len__(self):
        return len(self.terms)

    @property
    def period(self) -> float:
        """Stroboscopic period ``2*pi/omega`` of the first term."""
        if not self.terms:
            raise ValueError("unforced system has no forcing period")
        return 2.0 * math.pi / self.terms[0].omega

    @property
    def omega_max(self) -> float:
        return max((t.omega for t in self.terms), default=0.0)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for term in self.terms:
            out = out + term.mu * np.sin(term.omega * t + term.phase)
        return out

    def to_list(self) -> list[dict]:
        return [asdict(t) for t in self.terms]


@dataclass(frozen=True)
class SystemReal:
    """Derived matrices and vectors of a parameterised, forced PP04 system.

    ``particular[k] = (P_k, Q_k)`` gives the periodic response
    ``P_k cos(theta_k) + Q_k sin(theta_k)`` to the k-th forcing term, with
    ``theta_k = omega_k t + phase_k``.
    """

    params: ModelParams
    forcing: Forcing
    L: np.ndarray
    e: np.ndarray
    b_plus: np.ndarray
    b_minus: np.ndarray
    c: np.ndarray
    d: float
    eigen: linalg3.EigenDecomp
    particular: tuple[tuple[np.ndarray, np.ndarray], ...]
    r_plus_vec: np.ndarray
    r_minus_vec: np.ndarray
    n: np.ndarray
    # c projected on the eigenbasis, used by every F evaluation
    cU: np.ndarray = field(repr=False)

    def b(self, region: Region) -> np.ndarray:
        return self.b_plus if region == Region.PLUS else self.b_minus

    def r_vec(self, region: Region) -> np.ndarray:
        return self.r_plus_vec if region == Region.PLUS else self.r_minus_vec

    @property
    def lam(self) -> np.ndarray:
        return self.eigen.lam

    @property
    def period(self) -> float:
        return self.forcing.period

    @property
    def switch_jump(self) -> float:
        """Constant ``r = F''(plus side) - F''(minus side)`` at any point of the surface."""
        return float(self.c @ self.L @ (self.b_plus - self.b_minus))

    def particular_at(self, t: float) -> np.ndarray:
        out = np.zeros(3)
        for term, (P, Q) in zip(self.forcing.terms, self.particular):
            th = term.omega * t + term.phase
            out += P * math.cos(th) + Q * math.sin(th)
        return out

    def f_vec(self, t: float, region: Region) -> np.ndarray:
        """Closed-form attracting solution ``-L^-1 b + particular(t)`` of one region."""
        return self.r_vec(region) + self.particular_at(t)

    def rhs(self, t: float, x, region: Region) -> np.ndarray:
        return self.L @ np.asarray(x, float) + self.b(region) + float(self.forcing.value(t)) * self.e

    def fdot(self, t: float, x) -> float:
        """Time derivative of F along the flow (continuous across the surface)."""
        return float(self.c @ self.rhs(t, x, Region.PLUS))

    def fddot(self, t: float, x, region: Region) -> float:
        xdot = self.rhs(t, x, region)
        idot = sum(term.mu * term.omega * math.cos(term.omega * t + term.phase)
                   for term in self.forcing.terms)
        return float(self.c @ (self.L @ xdot + idot * self.e))

    def with_forcing(self, forcing: Forcing) -> "SystemReal":
        return build_system(self.params, forcing)

    def with_params(self, **changes) -> "SystemReal":
        return build_system(self.params.with_(**changes), self.forcing)


def model_matrices(p: ModelParams):
    """``L, e, b_plus, b_minus, c`` for the given constants."""
    L = np.array([
        [-1.0 / p.tau_V, 0.0, -p.x / p.tau_V],
        [1.0 / p.tau_A, -1.0 / p.tau_A, 0.0],
        [-p.beta / p.tau_C, 0.0, -1.0 / p.tau_C],
    ])
    e = np.array([-p.y / p.tau_V, 0.0, p.alpha / p.tau_C])
    # H(-F) = 0 on the glacial side, 1 on the interglacial side
    b_plus = np.array([p.z / p.tau_V, 0.0, p.delta / p.tau_C])
    b_minus = np.array([p.z / p.tau_V, 0.0, (p.delta + p.gamma) / p.tau_C])
    c = np.array([p.a, -p.b, 0.0])
    return L, e, b_plus, b_minus, c


def build_system(params: ModelParams | None = None, forcing: Forcing | None = None) -> SystemReal:
    params = params or ModelParams()
    forcing = forcing or Forcing()
    L, e, b_plus, b_minus, c = model_matrices(params)
    eig = linalg3.eigen_decompose(L)
    Linv = linalg3.inv3(L)

    particular = []
    for term in forcing.terms:
        zr, zi = linalg3.resolvent_apply(L, term.omega, e)
        # mu sin(th) = Im(mu e^{i th}) so the response is Im(mu z e^{i th})
        particular.append((term.mu * zi, term.mu * zr))

    M = eig.U @ np.diag([1.0, 0.0, 0.0]) @ eig.Uinv
    return SystemReal(
        params=params,
        forcing=forcing,
        L=L,
        e=e,
        b_plus=b_plus,
        b_minus=b_minus,
        c=c,
        d=params.d,
        eigen=eig,
        particular=tuple(particular),
        r_plus_vec=-Linv @ b_plus,
        r_minus_vec=-Linv @ b_minus,
        n=c @ M,
        cU=c @ eig.U,
    )


def switching_value(sys: SystemReal, x) -> float:
    """``F(x) = c.x + d``."""
    return float(sys.c @ np.asarray(x, float) + sys.d)


def region_of(sys: SystemReal, x) -> Region:
    return Region.PLUS if switching_value(sys, x) > 0 else Region.MINUS


def virtual_limits(sys: SystemReal) -> tuple[float, float]:
    """Asymptotic F of the unforced flow in each region, ignoring switching."""
    return (float(sys.c @ sys.r_plus_vec + sys.d),
            float(sys.c @ sys.r_minus_vec + sys.d))
