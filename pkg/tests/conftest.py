import sys

import numpy as np
import pytest

from pp04graze import Forcing, ModelParams, build_system

# section points listed with the (1,3) and (1,2) orbits at mu=0.3, omega=0.115
X31 = np.array([0.3636, 0.2089, 0.2356])
X21 = np.array([0.4025, 0.2972, 0.214])


def pade_expm(a):
    """Independent [6/6] Pade scaling-and-squaring exponential."""
    a = np.asarray(a, dtype=float)
    norm = np.max(np.sum(np.abs(a), axis=1))
    s = max(0, int(np.ceil(np.log2(norm / 0.5))) if norm > 0 else 0)
    a = a / 2.0 ** s
    c = [1.0]
    for k in range(1, 7):
        c.append(c[-1] * (6 - k + 1) / (k * (12 - k + 1)))
    eye = np.eye(len(a))
    N, D, p = c[0] * eye, c[0] * eye, eye
    for k in range(1, 7):
        p = p @ a
        N = N + c[k] * p
        D = D + (-1) ** k * c[k] * p
    r = np.linalg.solve(D, N)
    for _ in range(s):
        r = r @ r
    return r


@pytest.fixture(scope="session")
def sys13():
    return build_system(ModelParams(), Forcing.single(0.3, 0.115))


@pytest.fixture(scope="session")
def unforced():
    return build_system(ModelParams())


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    rep = getattr(mod, "REPORT", None)
    if not rep:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(rep):
        terminalreporter.write_line(rep[k][1])
