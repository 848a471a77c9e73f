"""Multi-objective problem model: constraints, scalarization, built-in problems.

A problem is a set of objective functions to minimize over a box-bounded
real decision vector, optionally subject to inequality constraints
``g(x) <= 0`` and equality constraints ``h(x) = 0`` (checked to a
tolerance).  Objectives are collapsed to a single fitness value through a
weighted sum; feasibility is tracked separately and never folded into the
scalar, so infeasible solutions are ranked by violation magnitude rather
than penalized fitness.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

from .errors import (
    DimensionMismatchError,
    NonFiniteObjectiveError,
    OverConstrainedError,
    UnknownProblemError,
)

DecisionVector = tuple[float, ...]
ObjectiveVector = tuple[float, ...]
WeightVector = tuple[float, ...]

ObjectiveFn = Callable[[DecisionVector], float]
ConstraintFn = Callable[[DecisionVector], float]

DEFAULT_EQ_TOLERANCE = 1e-6


class Violation(NamedTuple):
    """One violated constraint: which kind, which index, and by how much."""

    kind: str  # "inequality" | "equality" | "bound"
    index: int
    magnitude: float


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of a feasibility check.

    ``feasible`` is true exactly when ``violations`` is empty; only
    constraints with a strictly positive violation magnitude are listed.
    """

    feasible: bool
    violations: tuple[Violation, ...] = ()

    def __post_init__(self) -> None:
        if self.feasible != (len(self.violations) == 0):
            raise ValueError("feasible must be true iff violations is empty")

    @classmethod
    def from_violations(cls, violations: Sequence[Violation]) -> FeasibilityReport:
        violations = tuple(v for v in violations if v.magnitude > 0.0)
        return cls(feasible=not violations, violations=violations)

    @property
    def total_violation(self) -> float:
        """Sum of all violation magnitudes; 0.0 when feasible."""
        return math.fsum(v.magnitude for v in self.violations)


def degrees_of_freedom(n_vars: int, n_equalities: int) -> int:
    """Decision variables left free after equality constraints are imposed.

    Raises:
        OverConstrainedError: when ``n_equalities >= n_vars``; there are
            more equations than unknowns and nothing is left to optimize.
    """
    if n_equalities >= n_vars:
        raise OverConstrainedError(
            f"{n_equalities} equality constraints on {n_vars} variables "
            "leave no degrees of freedom"
        )
    return n_vars - n_equalities


@dataclass(frozen=True)
class Problem:
    """A box-bounded multi-objective minimization problem.

    Attributes:
        name: Identifier used in logs, records, and the CLI.
        n_vars: Number of decision variables.
        bounds: Per-variable (low, high) intervals, one per variable.
        objectives: Pure functions mapping a decision vector to a real value.
        inequality_constraints: Pure functions g with g(x) <= 0 when satisfied.
        equality_constraints: Pure functions h with h(x) = 0 when satisfied,
            checked to within ``eq_tolerance``.
        eq_tolerance: Absolute tolerance for equality constraints.
    """

    name: str
    n_vars: int
    bounds: tuple[tuple[float, float], ...]
    objectives: tuple[ObjectiveFn, ...]
    inequality_constraints: tuple[ConstraintFn, ...] = ()
    equality_constraints: tuple[ConstraintFn, ...] = ()
    eq_tolerance: float = DEFAULT_EQ_TOLERANCE

    def __post_init__(self) -> None:
        if self.n_vars < 1:
            raise ValueError("n_vars must be >= 1")
        if len(self.objectives) < 1:
            raise ValueError("at least one objective is required")
        if len(self.bounds) != self.n_vars:
            raise ValueError("one (low, high) bound pair per variable required")
        for i, (lo, hi) in enumerate(self.bounds):
            if lo > hi:
                raise ValueError(f"bound {i}: low {lo} exceeds high {hi}")
        if self.eq_tolerance < 0:
            raise ValueError("eq_tolerance must be non-negative")
        # Construction itself enforces the over-constrained guard.
        degrees_of_freedom(self.n_vars, len(self.equality_constraints))

    @property
    def num_objectives(self) -> int:
        return len(self.objectives)

    @property
    def constrained(self) -> bool:
        return bool(self.inequality_constraints or self.equality_constraints)

    @property
    def free_variables(self) -> int:
        """Degrees of freedom: variables minus equality constraints."""
        return degrees_of_freedom(self.n_vars, len(self.equality_constraints))


def _require_dimension(problem: Problem, x: Sequence[float]) -> None:
    if len(x) != problem.n_vars:
        raise DimensionMismatchError(
            f"vector of length {len(x)} against problem "
            f"{problem.name!r} with {problem.n_vars} variables"
        )


def evaluate_objectives(problem: Problem, x: Sequence[float]) -> ObjectiveVector:
    """Apply every objective to ``x``, in declaration order.

    Raises:
        DimensionMismatchError: wrong vector length.
        NonFiniteObjectiveError: an objective returned NaN or infinity.
    """
    _require_dimension(problem, x)
    x = tuple(x)
    values = []
    for i, objective in enumerate(problem.objectives):
        value = float(objective(x))
        if not math.isfinite(value):
            raise NonFiniteObjectiveError(
                f"objective {i} of {problem.name!r} returned {value!r} at x={x!r}"
            )
        values.append(value)
    return tuple(values)


def scalarize_weighted_sum(weights: Sequence[float], objectives: Sequence[float]) -> float:
    """Collapse an objective vector to one value: sum of w_i * f_i."""
    if len(weights) != len(objectives):
        raise DimensionMismatchError(
            f"{len(weights)} weights against {len(objectives)} objectives"
        )
    return math.fsum(w * f for w, f in zip(weights, objectives))


def validate_weights(weights: Sequence[float]) -> WeightVector:
    """Check a weight vector: all finite and non-negative, at least one positive."""
    weights = tuple(float(w) for w in weights)
    if not weights:
        raise ValueError("weight vector must not be empty")
    for i, w in enumerate(weights):
        if not math.isfinite(w) or w < 0:
            raise ValueError(f"weight {i} must be finite and non-negative, got {w}")
    if not any(w > 0 for w in weights):
        raise ValueError("at least one weight must be positive")
    return weights


def check_feasibility(problem: Problem, x: Sequence[float]) -> FeasibilityReport:
    """Report which constraints (and bounds) ``x`` violates, and by how much.

    Inequality violation is ``max(0, g(x))``; equality violation is
    ``max(0, |h(x)| - eq_tolerance)``; a bound violation is the distance
    outside the interval.
    """
    _require_dimension(problem, x)
    x = tuple(x)
    violations: list[Violation] = []
    for i, (value, (lo, hi)) in enumerate(zip(x, problem.bounds)):
        if value < lo:
            violations.append(Violation("bound", i, lo - value))
        elif value > hi:
            violations.append(Violation("bound", i, value - hi))
    for i, g in enumerate(problem.inequality_constraints):
        violations.append(Violation("inequality", i, max(0.0, float(g(x)))))
    for j, h in enumerate(problem.equality_constraints):
        magnitude = max(0.0, abs(float(h(x))) - problem.eq_tolerance)
        violations.append(Violation("equality", j, magnitude))
    return FeasibilityReport.from_violations(violations)


# --- fitness strategies -----------------------------------------------------
#
# The rule engine selects one of these by id when a problem is submitted;
# workers and the local evaluator apply the selected strategy uniformly.

def _fitness_scalar_direct(weights: WeightVector, objectives: ObjectiveVector) -> float:
    if len(objectives) != 1:
        raise DimensionMismatchError(
            f"scalar-direct fitness needs exactly one objective, got {len(objectives)}"
        )
    return objectives[0]


FITNESS_STRATEGIES: dict[str, Callable[[WeightVector, ObjectiveVector], float]] = {
    "scalar-direct": _fitness_scalar_direct,
    "weighted-sum": scalarize_weighted_sum,
    # Same scalar as weighted-sum; feasibility drives solution ranking
    # separately and is never folded into the value.
    "weighted-sum-feasibility": scalarize_weighted_sum,
}


def fitness_value(fitness_id: str, weights: WeightVector, objectives: ObjectiveVector) -> float:
    """Apply the named fitness strategy to an objective vector."""
    try:
        strategy = FITNESS_STRATEGIES[fitness_id]
    except KeyError:
        raise ValueError(f"unknown fitness strategy {fitness_id!r}") from None
    return strategy(weights, objectives)


# --- built-in problem registry ----------------------------------------------

def _sphere(x: DecisionVector) -> float:
    return math.fsum(v * v for v in x)


def _parabola_at_origin(x: DecisionVector) -> float:
    return x[0] * x[0]


def _parabola_at_two(x: DecisionVector) -> float:
    return (x[0] - 2.0) * (x[0] - 2.0)


def _first_coordinate(x: DecisionVector) -> float:
    return x[0]


def _second_coordinate(x: DecisionVector) -> float:
    return x[1]


def _box_sum_floor(x: DecisionVector) -> float:
    # Feasible region requires x1 + x2 >= 1.
    return 1.0 - x[0] - x[1]


def _box_x1_cap(x: DecisionVector) -> float:
    return x[0] - 3.0


_SPHERE_PATTERN = re.compile(r"^sphere-([1-9][0-9]*)$")


def builtin_problem(name: str) -> Problem:
    """Construct a problem from the built-in registry.

    Registry:
        sphere-N        minimize sum of squares over [-10, 10]^N (any N >= 1)
        two-parabolas   f1 = x^2, f2 = (x-2)^2 over [-5, 5]
        constrained-box f1 = x1, f2 = x2 with 1 - x1 - x2 <= 0 and
                        x1 - 3 <= 0 over [0, 3]^2

    Raises:
        UnknownProblemError: name not in the registry.
    """
    sphere = _SPHERE_PATTERN.match(name)
    if sphere:
        n = int(sphere.group(1))
        return Problem(
            name=name,
            n_vars=n,
            bounds=((-10.0, 10.0),) * n,
            objectives=(_sphere,),
        )
    if name == "two-parabolas":
        return Problem(
            name=name,
            n_vars=1,
            bounds=((-5.0, 5.0),),
            objectives=(_parabola_at_origin, _parabola_at_two),
        )
    if name == "constrained-box":
        return Problem(
            name=name,
            n_vars=2,
            bounds=((0.0, 3.0), (0.0, 3.0)),
            objectives=(_first_coordinate, _second_coordinate),
            inequality_constraints=(_box_sum_floor, _box_x1_cap),
        )
    raise UnknownProblemError(
        f"no built-in problem named {name!r}; "
        "expected sphere-N, two-parabolas, or constrained-box"
    )
