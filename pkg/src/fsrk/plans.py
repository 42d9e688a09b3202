"""Assignment of Runge-Kutta sub-integrators to splitting sub-flows.

A plan maps each (stage, operator) sub-integration to a tableau.
Resolution order: an explicit per-(stage, operator) override wins, then
the negative-step policy when the coefficient is negative, then the
operator default. The negative-step policy exists because backward
sub-flows of an explicit scheme are unstable for decaying modes and
backward implicit sub-flows carry poles into the left half-plane;
replacing them with forward Euler trades order for robustness.
"""

from .errors import InputError
from .tableaus import fe, get_tableau

ORDERINGS = ("DR", "RD")


def check_ordering(ordering):
    key = str(ordering).upper()
    if key not in ORDERINGS:
        raise InputError(f"ordering must be DR or RD, got {ordering!r}")
    return key


class SubIntegratorPlan:
    """Per-stage, per-operator tableau assignment with overrides."""

    def __init__(self, default_per_operator=None, overrides=None, negative_step_policy=None):
        defaults = dict(default_per_operator or {})
        for op in defaults:
            if op not in (1, 2):
                raise InputError(f"plan default operator must be 1 or 2, got {op!r}")
        over = dict(overrides or {})
        for key in over:
            if (
                not isinstance(key, tuple)
                or len(key) != 2
                or key[1] not in (1, 2)
                or int(key[0]) < 1
            ):
                raise InputError(f"plan override key must be (stage, operator), got {key!r}")
        self.default_per_operator = defaults
        self.overrides = over
        self.negative_step_policy = negative_step_policy

    def resolve(self, stage, operator, alpha):
        """Tableau for sub-integration (stage, operator) with coefficient alpha."""
        key = (stage, operator)
        if key in self.overrides:
            return self.overrides[key]
        if alpha < 0.0 and self.negative_step_policy is not None:
            return self.negative_step_policy
        tab = self.default_per_operator.get(operator)
        if tab is None:
            raise InputError(
                f"plan has no tableau for operator {operator} at stage {stage}"
            )
        return tab

    def covers(self, method):
        """True when every nonzero coefficient resolves to a tableau."""
        for k in range(1, method.stages + 1):
            for op in (1, 2):
                a = method.alpha[k - 1, op - 1]
                if a != 0.0:
                    try:
                        self.resolve(k, op, a)
                    except InputError:
                        return False
        return True

    def mirrored(self, stages):
        """Plan for the adjoint method: stage order reversed, operators swapped."""
        defaults = {3 - op: tab for op, tab in self.default_per_operator.items()}
        overrides = {
            (stages - k + 1, 3 - op): tab for (k, op), tab in self.overrides.items()
        }
        return SubIntegratorPlan(defaults, overrides, self.negative_step_policy)

    def describe(self):
        parts = [
            f"{op}:{tab.name}" for op, tab in sorted(self.default_per_operator.items())
        ]
        for (k, op), tab in sorted(self.overrides.items()):
            parts.append(f"({k},{op}):{tab.name}")
        if self.negative_step_policy is not None:
            parts.append(f"neg->{self.negative_step_policy.name}")
        return " ".join(parts) if parts else "(empty)"

    def __repr__(self):
        return f"SubIntegratorPlan({self.describe()})"


def parse_plan(text):
    """Parse '<diffusion>:<reaction>[+negfe]' into (diffusion tableau,
    reaction tableau, negfe flag)."""
    spec = str(text).strip()
    negfe = False
    if spec.endswith("+negfe"):
        negfe = True
        spec = spec[: -len("+negfe")]
    parts = spec.split(":")
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise InputError(
            f"plan must look like '<diffusion>:<reaction>[+negfe]', got {text!r}"
        )
    return get_tableau(parts[0]), get_tableau(parts[1]), negfe


def plan_for_ordering(diffusion, reaction, ordering, negfe=False):
    """Build the operator plan for an ordering, given role tableaus.

    DR integrates diffusion as operator 1 and reaction as operator 2;
    RD swaps the roles. negfe=True replaces every negative step in both
    operators with forward Euler.
    """
    key = check_ordering(ordering)
    if key == "DR":
        defaults = {1: diffusion, 2: reaction}
    else:
        defaults = {1: reaction, 2: diffusion}
    return SubIntegratorPlan(defaults, negative_step_policy=fe if negfe else None)


def plan_from_string(text, ordering):
    """parse_plan plus plan_for_ordering in one step (CLI helper)."""
    diffusion, reaction, negfe = parse_plan(text)
    return plan_for_ordering(diffusion, reaction, ordering, negfe=negfe)
