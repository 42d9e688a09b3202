"""Coefficients and accuracy analysis of 2-split fractional-step methods.

A 2-split, s-stage splitting method advances y' = F1(y) + F2(y) by
alternating sub-flows: in stage k the operator-1 flow is applied over
alpha_k[1]*dt, then the operator-2 flow over alpha_k[2]*dt, chaining
initial conditions. Classical members are the Lie-Trotter product, the
Strang (1968) composition, and Ruth's (1983) third-order triple jump;
AKS3 is the palindromic three-stage scheme of Auzinger et al. (2016).

This module stores the coefficient tables, checks the order conditions
up to p = 4, computes the third-order local error measure LEM(3), forms
adjoints, and generates the one-parameter family of three-stage
third-order methods.
"""

import warnings

import numpy as np

from .errors import FsrkError, InputError, SplittingDomainError

CONSISTENCY_TOL = 1e-12
DEFAULT_ORDER_TOL = 1e-10


class SplittingMethod:
    """Named coefficient table alpha[k][l] of a 2-split, s-stage method.

    claimed_order is metadata only (0 = unclaimed); analysis paths
    re-verify it rather than trusting it. Instances are immutable.
    """

    def __init__(self, name, alpha, claimed_order=0):
        alpha = np.array(alpha, dtype=float)
        if alpha.ndim != 2 or alpha.shape[1] != 2 or alpha.shape[0] < 1:
            raise InputError(
                f"method {name}: alpha must be an s-by-2 matrix, got shape {alpha.shape}"
            )
        if not np.all(np.isfinite(alpha)):
            raise InputError(f"method {name}: non-finite coefficient")
        claimed_order = int(claimed_order)
        if claimed_order < 0:
            raise InputError(f"method {name}: claimed_order must be >= 0")
        if claimed_order >= 1:
            for col in (0, 1):
                defect = abs(alpha[:, col].sum() - 1.0)
                if defect > CONSISTENCY_TOL:
                    raise InputError(
                        f"method {name}: claimed order {claimed_order} but "
                        f"sum(alpha[{col + 1}]) - 1 = {defect:.3e} exceeds {CONSISTENCY_TOL}"
                    )
        self.name = str(name)
        self.alpha = alpha
        self.claimed_order = claimed_order
        self.alpha.setflags(write=False)

    @property
    def stages(self):
        return self.alpha.shape[0]

    @property
    def alpha1(self):
        return self.alpha[:, 0]

    @property
    def alpha2(self):
        return self.alpha[:, 1]

    @property
    def sub_integration_count(self):
        """Number of nonzero coefficients; zero sub-flows are skipped."""
        return int(np.count_nonzero(self.alpha))

    def __repr__(self):
        return (
            f"SplittingMethod({self.name!r}, stages={self.stages}, "
            f"claimed_order={self.claimed_order})"
        )


class OrderConditionReport:
    """Residuals (LHS minus RHS) of each order condition, by order."""

    def __init__(self, residuals_by_order, tol):
        self.residuals_by_order = residuals_by_order
        self.tol = tol
        self.satisfied_order = 0
        for p in sorted(residuals_by_order):
            if np.max(np.abs(residuals_by_order[p])) < tol:
                if p == self.satisfied_order + 1:
                    self.satisfied_order = p
            else:
                break

    def max_residual(self, upto):
        """Largest |residual| over all conditions of order <= upto."""
        vals = [
            np.max(np.abs(r))
            for p, r in self.residuals_by_order.items()
            if p <= upto
        ]
        if not vals:
            raise InputError(f"no residuals computed up to order {upto}")
        return float(max(vals))

    def __repr__(self):
        return (
            f"OrderConditionReport(satisfied_order={self.satisfied_order}, "
            f"tol={self.tol:g})"
        )


class LemReport:
    """Leading fourth-order error monomial coefficients of a p=3 method."""

    def __init__(self, lambda41, lambda42, lambda43):
        self.lambda41 = float(lambda41)
        self.lambda42 = float(lambda42)
        self.lambda43 = float(lambda43)
        self.lem3 = float(np.sqrt(lambda41**2 + lambda42**2 + lambda43**2))

    def __repr__(self):
        return (
            f"LemReport(lem3={self.lem3:.6g}, lambdas=({self.lambda41:.6g}, "
            f"{self.lambda42:.6g}, {self.lambda43:.6g}))"
        )


def _condition_sums(m):
    """Shared cumulative sums. a = alpha[:,0], b = alpha[:,1]."""
    a = m.alpha[:, 0]
    b = m.alpha[:, 1]
    sa = np.cumsum(a)               # sum_{k<=i} a_k
    ra = sa[-1] - sa                # sum_{k>i} a_k
    tb = np.cumsum(b[::-1])[::-1]   # sum_{k>=i} b_k
    lb = tb[0] - tb                 # sum_{k<i} b_k
    return a, b, sa, ra, tb, lb


def _p4_sums(m):
    """The three fourth-order elementary sums S1, S2, S3."""
    a, b, _, ra, _, lb = _condition_sums(m)
    s1 = b @ ra**3
    u = b * ra**2
    tail_u = np.concatenate((np.cumsum(u[::-1])[::-1][1:], [0.0]))  # sum_{k>i} u_k
    s2 = (b**2) @ ra**2 + 2.0 * (b @ tail_u)
    s3 = a @ lb**3
    return s1, s2, s3


def order_condition_residuals(m, max_p=4, tol=DEFAULT_ORDER_TOL):
    """Evaluate the splitting order conditions for p = 1..max_p.

    Residual vectors per order: two at p=1 (consistency of each
    coefficient column), one at p=2, two at p=3, three at p=4. Each
    entry is the condition's left-hand side minus its right-hand side.

    tol only affects the reported satisfied_order, not the residuals.
    """
    if not isinstance(m, SplittingMethod):
        raise InputError("order_condition_residuals expects a SplittingMethod")
    if not 1 <= int(max_p) <= 4:
        raise InputError(f"max_p must be in 1..4, got {max_p}")
    max_p = int(max_p)
    a, b, sa, ra, tb, _ = _condition_sums(m)

    residuals = {1: np.array([a.sum() - 1.0, b.sum() - 1.0])}
    if max_p >= 2:
        residuals[2] = np.array([b @ sa - 0.5])
    if max_p >= 3:
        third = 1.0 / 3.0
        residuals[3] = np.array([b @ ra**2 - third, a @ tb**2 - third])
    if max_p >= 4:
        s1, s2, s3 = _p4_sums(m)
        residuals[4] = np.array([s1 - 0.25, s2 - 1.0 / 6.0, s3 - 0.25])
    return OrderConditionReport(residuals, float(tol))


def lem3(m):
    """Local error measure of a third-order method.

    LEM(3) is the Euclidean norm of the three leading error-monomial
    coefficients lambda_{4,j}; it is meaningful only when the p = 1..3
    conditions hold, so a warning is issued otherwise.
    """
    report = order_condition_residuals(m, max_p=3, tol=1e-8)
    if report.satisfied_order < 3:
        warnings.warn(
            f"lem3({m.name}): method only satisfies order "
            f"{report.satisfied_order}; LEM(3) is not meaningful",
            stacklevel=2,
        )
    s1, s2, s3 = _p4_sums(m)
    return LemReport(4.0 * s1 - 1.0, 6.0 * s2 - 1.0, 4.0 * s3 - 1.0)


def adjoint(m):
    """Adjoint method: reverse the stage order and swap operator columns.

    The adjoint satisfies the same order conditions as the original and
    adjoint(adjoint(m)) == m exactly.
    """
    if not isinstance(m, SplittingMethod):
        raise InputError("adjoint expects a SplittingMethod")
    star = m.alpha[::-1, ::-1]
    name = m.name[:-1] if m.name.endswith("*") else m.name + "*"
    return SplittingMethod(name, star, m.claimed_order)


_THETA_MIN_NEG = -1.217077796  # real-coefficient bound below 1/4
_FAMILY_EXCLUSIONS = (0.25, 1.0 / 3.0, 1.0)


def three_stage_family_discriminant(theta):
    """Quartic under the square root of the alpha_2[2] branch formula."""
    return 144.0 * theta**4 + 72.0 * theta**3 - 99.0 * theta**2 + 30.0 * theta - 3.0


def three_stage_family(theta, branch):
    """One-parameter family of three-stage third-order methods.

    theta parameterizes alpha_3[2]; branch ('plus' or 'minus') selects
    the sign of the square root in the alpha_2[2] formula. Real
    coefficients require theta > 1/4 or theta < -1.217077796, and
    theta = 1/4, 1/3, 1 make a denominator vanish.
    """
    theta = float(theta)
    if branch not in ("plus", "minus"):
        raise InputError(f"branch must be 'plus' or 'minus', got {branch!r}")
    if abs(theta - 0.25) < 1e-12:
        raise SplittingDomainError(
            "theta = 1/4 violates theta != 1/4 (branch denominator 24*theta - 6 = 0)"
        )
    if abs(theta - 1.0 / 3.0) < 1e-12:
        raise SplittingDomainError(
            "theta = 1/3 violates theta != 1/3 (alpha_2[2] or alpha_1[2] vanishes)"
        )
    if abs(theta - 1.0) < 1e-12:
        raise SplittingDomainError(
            "theta = 1 violates theta != 1 (alpha_3[2] - 1 = 0)"
        )
    q = three_stage_family_discriminant(theta)
    if q < 0.0:
        raise SplittingDomainError(
            f"theta = {theta} violates theta > 1/4 or theta < {_THETA_MIN_NEG} "
            f"(discriminant 144t^4 + 72t^3 - 99t^2 + 30t - 3 = {q:.6g} < 0)"
        )
    sign = 1.0 if branch == "plus" else -1.0
    b3 = theta
    b2 = (1.0 - theta) / 2.0 + sign * np.sqrt(q) / (24.0 * theta - 6.0)
    b1 = 1.0 - b2 - b3
    a3 = -(3.0 * b2 + 3.0 * b3 - 1.0) / (6.0 * b2 * (b3 - 1.0))
    a2 = (2.0 * a3 * b3 - 2.0 * a3 + 1.0) / (2.0 * b1)
    a1 = 1.0 - a2 - a3
    method = SplittingMethod(
        f"family3(theta={theta:.12g},{branch})",
        [[a1, b1], [a2, b2], [a3, b3]],
        claimed_order=3,
    )
    check = order_condition_residuals(method, max_p=3, tol=1e-10)
    if check.satisfied_order < 3:
        raise FsrkError(
            f"three_stage_family(theta={theta}, {branch}): order-3 residuals "
            f"reach {check.max_residual(3):.3e}; theta is too close to an "
            "excluded value for well-conditioned coefficients"
        )
    return method


def _build_registry():
    ruth = SplittingMethod(
        "ruth",
        [[7.0 / 24.0, 2.0 / 3.0], [3.0 / 4.0, -2.0 / 3.0], [-1.0 / 24.0, 1.0]],
        claimed_order=3,
    )
    # Palindromic three-stage LEM minimizer; regenerating it from the
    # family at its published parameter keeps the order conditions exact
    # to machine precision (the 15-decimal table rounds at ~3e-9).
    aks3 = three_stage_family(0.268330095673069, "minus")
    aks3 = SplittingMethod("aks3", aks3.alpha, claimed_order=3)
    os437_minlem = SplittingMethod(
        "os437-minlem",
        [
            [0.675603619637542, 1.351207213243766],
            [-0.175603577692365, -1.702414383919316],
            [-0.175603614267295, 1.351207170675550],
            [0.675603572322118, 0.0],
        ],
        claimed_order=3,
    )
    os437dr_minx = SplittingMethod(
        "os437dr-minx",
        [
            [0.0, 0.214870149852186],
            [0.511486052225367, 0.668690687888393],
            [-0.501427388979812, -0.041956908041494],
            [0.989941336754445, 0.158396070300915],
        ],
        claimed_order=3,
    )
    return [
        SplittingMethod("lie-trotter", [[1.0, 1.0]], claimed_order=1),
        SplittingMethod("strang", [[0.5, 1.0], [0.5, 0.0]], claimed_order=2),
        ruth,
        aks3,
        os437_minlem,
        os437dr_minx,
    ]


_REGISTRY = None


def registry():
    """All built-in methods: lie-trotter, strang, ruth, aks3, and the two
    optimizer-derived four-stage schemes os437-minlem and os437dr-minx."""
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = _build_registry()
    return list(_REGISTRY)


def get_method(name):
    """Look up a built-in method by name (case-insensitive)."""
    key = str(name).strip().lower().replace("_", "-")
    for m in registry():
        if m.name == key:
            return m
    known = ", ".join(m.name for m in registry())
    raise InputError(f"unknown method {name!r}; built-ins: {known}")


def iter_config_lines(path):
    """Yield (line_number, tokens) from a line-oriented config file.

    '#' starts a comment; blank lines are skipped. Shared by the method
    file reader and the optimizer design-spec reader.
    """
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def read_method_file(path):
    """Parse a method coefficient file.

    Format: `name <id>`, `stages <s>`, optional `order <p>`, then s
    lines each holding alpha_k[1] and alpha_k[2] as decimal literals.
    """
    name = None
    stages = None
    order = 0
    rows = []
    for lineno, tokens in iter_config_lines(path):
        key = tokens[0].lower()
        if key == "name" and name is None:
            if len(tokens) < 2:
                raise InputError(f"{path}:{lineno}: name requires a value")
            name = " ".join(tokens[1:])
        elif key == "stages" and stages is None:
            stages = int(tokens[1])
        elif key == "order":
            order = int(tokens[1])
        else:
            if len(tokens) != 2:
                raise InputError(
                    f"{path}:{lineno}: expected two coefficients, got {tokens!r}"
                )
            try:
                rows.append((float(tokens[0]), float(tokens[1])))
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
    if name is None or stages is None:
        raise InputError(f"{path}: missing required 'name' or 'stages' line")
    if len(rows) != stages:
        raise InputError(
            f"{path}: stages = {stages} but {len(rows)} coefficient rows"
        )
    return SplittingMethod(name, rows, claimed_order=order)


def write_method_file(m, path):
    """Write a method file that round-trips coefficients exactly."""
    lines = [f"name {m.name}", f"stages {m.stages}"]
    if m.claimed_order:
        lines.append(f"order {m.claimed_order}")
    for k in range(m.stages):
        lines.append(f"{m.alpha[k, 0]:.17g} {m.alpha[k, 1]:.17g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
