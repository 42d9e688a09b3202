"""Butcher tableaus for the Runge-Kutta sub-integrators.

The built-ins are the four schemes used throughout: forward Euler, Heun,
Kutta's third-order method (RK3), and the two-stage, third-order SDIRK
method with gamma = (3+sqrt(3))/6 of Hairer, Norsett & Wanner (1993).
"""

import numpy as np

from .errors import InputError

EXPLICIT = "explicit"
DIAGONALLY_IMPLICIT = "diagonally_implicit"


class ButcherTableau:
    """One-step Runge-Kutta scheme, explicit or diagonally implicit.

    A must be lower triangular: strictly so for explicit tableaus, with at
    least one nonzero diagonal entry for diagonally implicit ones.
    """

    def __init__(self, name, A, b, c, kind):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        c = np.asarray(c, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InputError(f"tableau {name}: A must be square, got {A.shape}")
        s = A.shape[0]
        if b.shape != (s,) or c.shape != (s,):
            raise InputError(f"tableau {name}: b and c must have length {s}")
        if np.any(np.triu(A, 1) != 0.0):
            raise InputError(f"tableau {name}: A must be lower triangular")
        diag = np.diag(A)
        if kind == EXPLICIT:
            if np.any(diag != 0.0):
                raise InputError(f"tableau {name}: explicit requires zero diagonal")
        elif kind == DIAGONALLY_IMPLICIT:
            if not np.any(diag != 0.0):
                raise InputError(
                    f"tableau {name}: diagonally implicit requires a nonzero diagonal entry"
                )
        else:
            raise InputError(f"tableau {name}: unknown kind {kind!r}")
        self.name = name
        self.A = A
        self.b = b
        self.c = c
        self.kind = kind
        self.A.setflags(write=False)
        self.b.setflags(write=False)
        self.c.setflags(write=False)

    @property
    def n_stages(self):
        return len(self.b)

    @property
    def is_explicit(self):
        return self.kind == EXPLICIT

    def poles(self):
        """Poles of the stability function: z = 1/A_ii for nonzero diagonal
        entries (A lower triangular, so det(I - zA) = prod(1 - z A_ii))."""
        diag = np.diag(self.A)
        return [1.0 / d for d in diag if d != 0.0]

    def stability(self, z):
        """Stability function R(z) = 1 + z b^T (I - zA)^{-1} 1.

        Accepts a complex scalar or array; vectorized over z. The linear
        solve is a forward substitution (A is lower triangular). At a pole
        the result is non-finite rather than an exception; callers that
        need an error should use :func:`fsrk.stability.rk_stability`.
        """
        z = np.asarray(z, dtype=complex)
        A, b = self.A, self.b
        s = self.n_stages
        # w solves (I - zA) w = 1, stage by stage
        w = []
        with np.errstate(divide="ignore", invalid="ignore"):
            for i in range(s):
                acc = np.ones_like(z)
                for j in range(i):
                    if A[i, j] != 0.0:
                        acc = acc + z * A[i, j] * w[j]
                if A[i, i] != 0.0:
                    acc = acc / (1.0 - z * A[i, i])
                w.append(acc)
            out = np.ones_like(z)
            for i in range(s):
                if b[i] != 0.0:
                    out = out + z * b[i] * w[i]
        return out if out.ndim else out[()]

    def __repr__(self):
        return f"ButcherTableau({self.name!r}, stages={self.n_stages}, kind={self.kind!r})"


class ExactFlow:
    """Sentinel sub-integrator: the exact flow of a linear operator.

    Only usable on operators that declare a constant matrix; the stability
    function is exp(z). Useful as an error-free baseline in tests and for
    commuting-flow identities.
    """

    name = "exact"
    kind = "exact"
    is_explicit = True

    def poles(self):
        return []

    def stability(self, z):
        return np.exp(np.asarray(z, dtype=complex))

    def __repr__(self):
        return "ExactFlow()"


SQRT3 = np.sqrt(3.0)
SDIRK_GAMMA = (3.0 + SQRT3) / 6.0

fe = ButcherTableau("fe", [[0.0]], [1.0], [0.0], EXPLICIT)

heun = ButcherTableau(
    "heun",
    [[0.0, 0.0], [1.0, 0.0]],
    [0.5, 0.5],
    [0.0, 1.0],
    EXPLICIT,
)

rk3 = ButcherTableau(
    "rk3",
    [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [-1.0, 2.0, 0.0]],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [0.0, 0.5, 1.0],
    EXPLICIT,
)

sdirk23 = ButcherTableau(
    "sdirk23",
    [[SDIRK_GAMMA, 0.0], [1.0 - 2.0 * SDIRK_GAMMA, SDIRK_GAMMA]],
    [0.5, 0.5],
    [SDIRK_GAMMA, 1.0 - SDIRK_GAMMA],
    DIAGONALLY_IMPLICIT,
)

exact = ExactFlow()

TABLEAUS = {t.name: t for t in (fe, heun, rk3, sdirk23, exact)}


def get_tableau(name):
    """Look up a built-in tableau by name (case-insensitive)."""
    key = str(name).strip().lower()
    if key not in TABLEAUS:
        known = ", ".join(sorted(TABLEAUS))
        raise InputError(f"unknown tableau {name!r}; built-ins: {known}")
    return TABLEAUS[key]
