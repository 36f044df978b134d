# app/worker/logic/lp.py
"""Dense two-phase tableau simplex and LP utilities.

Pricing is Dantzig's largest-coefficient rule for a bounded number of pivots
and Bland's smallest-index rule afterwards, so runs are deterministic and
cannot cycle. The returned primal is a basic feasible solution recomputed
from the final basis, and duals come from the same basis (B^T y = c_B),
expressed in the convention `objective = sum_i y_i * rhs_i`.
"""
import logging
import time
from typing import Iterable, Mapping

import numpy as np

from app.core.config import settings
from app.core.exceptions import Infeasible, InvalidInput, NumericFailure
from app.core.metrics import LP_PIVOTS, LP_SOLVE_SECONDS, LP_SOLVES
from app.models.lp import LinearProgram, LpSolution, LpStatus, Relation, Sense, Variable

logger = logging.getLogger(__name__)


class ProgramBuilder:
    """Incrementally assembles a `LinearProgram` by variable index."""

    def __init__(self, sense: Sense, name: str = "lp"):
        self.sense = sense
        self.name = name
        self._variables: list[Variable] = []
        self._index: dict[str, int] = {}
        self._objective: list[float] = []
        self._rows: list[dict[int, float]] = []
        self._relations: list[Relation] = []
        self._rhs: list[float] = []
        self._row_names: list[str] = []
        self._constant = 0.0

    def add_variable(self, name: str, lower: float = 0.0, objective: float = 0.0) -> int:
        if name in self._index:
            raise InvalidInput(f"Duplicate variable name {name!r}")
        self._index[name] = len(self._variables)
        self._variables.append(Variable(name, lower))
        self._objective.append(float(objective))
        return self._index[name]

    def add_constraint(
        self,
        name: str,
        terms: Mapping[int, float] | Iterable[tuple[int, float]],
        relation: Relation,
        rhs: float,
    ) -> int:
        row: dict[int, float] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for column, coefficient in items:
            row[column] = row.get(column, 0.0) + float(coefficient)
        self._rows.append(row)
        self._relations.append(relation)
        self._rhs.append(float(rhs))
        self._row_names.append(name)
        return len(self._rows) - 1

    def add_constant(self, value: float) -> None:
        self._constant += float(value)

    def build(self) -> LinearProgram:
        if len(set(self._row_names)) != len(self._row_names):
            raise InvalidInput(f"Duplicate constraint names in {self.name!r}")
        matrix = np.zeros((len(self._rows), len(self._variables)))
        for i, row in enumerate(self._rows):
            if row:
                columns = np.fromiter(row.keys(), dtype=int, count=len(row))
                matrix[i, columns] = np.fromiter(row.values(), dtype=float, count=len(row))
        return LinearProgram(
            sense=self.sense,
            variables=tuple(self._variables),
            objective=np.array(self._objective),
            matrix=matrix,
            relations=tuple(self._relations),
            rhs=np.array(self._rhs),
            row_names=tuple(self._row_names),
            objective_constant=self._constant,
            name=self.name,
        )


def _row_satisfied(relation: Relation, lhs: float, rhs: float, tol: float) -> bool:
    if relation == Relation.LE:
        return lhs <= rhs + tol
    if relation == Relation.GE:
        return lhs >= rhs - tol
    return abs(lhs - rhs) <= tol


class _Simplex:
    def __init__(self, lp: LinearProgram):
        self.lp = lp
        self.feasibility_tol = settings.LP_FEASIBILITY_TOL
        self.optimality_tol = settings.LP_OPTIMALITY_TOL
        self.pivot_tol = settings.LP_PIVOT_TOL
        self.iterations = 0
        self.last_refactor = 0
        self.original = np.zeros((0, 1))
        self.alive = np.arange(0)

    def _pivot(self, tableau: np.ndarray, basis: np.ndarray, row: int, column: int) -> None:
        tableau[row] /= tableau[row, column]
        factors = tableau[:, column].copy()
        factors[row] = 0.0
        tableau -= np.outer(factors, tableau[row])
        tableau[:, column] = 0.0
        tableau[row, column] = 1.0
        basis[row] = column

    def _refactor(self, tableau: np.ndarray, basis: np.ndarray) -> None:
        """Rebuild B^-1 [A | b] from the untouched standard-form rows."""
        original = self.original[self.alive]
        try:
            tableau[:] = np.linalg.solve(original[:, basis], original)
        except np.linalg.LinAlgError as e:
            raise NumericFailure(f"Basis of {self.lp.name!r} became singular", iterations=self.iterations) from e
        tableau[:, basis] = np.eye(len(basis))
        self.last_refactor = self.iterations

    def _pivot_rows(self, column: np.ndarray) -> np.ndarray:
        return np.flatnonzero(column > self.pivot_tol * max(1.0, float(np.abs(column).max(initial=0.0))))

    def _confirm_ray(self, tableau: np.ndarray, basis: np.ndarray, cost: np.ndarray, entering: int) -> str:
        """Recheck an apparent ray on a fresh factorization.

        Returns "ray" for a genuine improving ray, "pivot" when the fresh
        column has a usable pivot, and "stale" when the entering column only
        looked improving through accumulated round-off.
        """
        self._refactor(tableau, basis)
        column = tableau[:, entering]
        reduced = cost[entering] - cost[basis] @ column
        scale = max(1.0, abs(cost[entering]) + float(np.abs(cost[basis]) @ np.abs(column)))
        if reduced <= self.optimality_tol * scale:
            return "stale"
        if self._pivot_rows(column).size:
            return "pivot"
        # a blocking entry below the pivot tolerance still cuts the ray off
        if np.any(column > np.finfo(float).eps * max(1.0, float(np.abs(column).max(initial=0.0)))):
            return "stale"
        direction = np.zeros(self.original.shape[1] - 1)
        direction[entering] = 1.0
        direction[basis] -= column
        residual = np.abs(self.original[self.alive, :-1] @ direction).max(initial=0.0)
        if residual > self.feasibility_tol * max(1.0, float(np.abs(direction).max())):
            return "stale"
        return "ray"

    def _iterate(self, tableau: np.ndarray, basis: np.ndarray, cost: np.ndarray, allowed: np.ndarray) -> LpStatus:
        stale: set[int] = set()
        while True:
            if self.iterations >= settings.LP_MAX_ITERATIONS:
                raise NumericFailure(
                    f"Simplex exceeded {settings.LP_MAX_ITERATIONS} pivots on {self.lp.name!r}",
                    iterations=self.iterations,
                )
            if self.iterations - self.last_refactor >= settings.LP_REFACTOR_INTERVAL:
                self._refactor(tableau, basis)
            reduced = cost - cost[basis] @ tableau[:, :-1]
            reduced[~allowed] = 0.0
            reduced[basis] = 0.0
            reduced[list(stale)] = 0.0
            candidates = np.flatnonzero(reduced > self.optimality_tol)
            if candidates.size == 0:
                return LpStatus.OPTIMAL

            dantzig = self.iterations < settings.LP_DANTZIG_ITERATIONS
            entering = candidates[np.argmax(reduced[candidates])] if dantzig else candidates[0]
            rows = self._pivot_rows(tableau[:, entering])
            if rows.size == 0:
                verdict = self._confirm_ray(tableau, basis, cost, entering)
                if verdict == "ray":
                    return LpStatus.UNBOUNDED
                if verdict == "stale":
                    logger.debug(f"Column {entering} of {self.lp.name!r} only looked improving; skipping it")
                    stale.add(int(entering))
                continue

            column = tableau[:, entering]
            ratios = np.maximum(tableau[rows, -1], 0.0) / column[rows]
            best = ratios.min()
            # near-ties go to the largest pivot element
            tied = rows[ratios <= best + 1e-12 * (1.0 + best)]
            leaving = tied[np.argmax(column[tied])] if dantzig else tied[np.argmin(basis[tied])]
            self._pivot(tableau, basis, leaving, entering)
            self.iterations += 1
            stale.clear()

    def run(self) -> LpSolution:
        lp = self.lp
        sign = 1.0 if lp.sense == Sense.MAX else -1.0
        free = [j for j, v in enumerate(lp.variables) if v.is_free]
        structural = np.hstack([lp.matrix, -lp.matrix[:, free]])
        cost_structural = sign * np.concatenate([lp.objective, -lp.objective[free]])
        n_struct = structural.shape[1]

        peaks = np.abs(structural).max(axis=1) if n_struct else np.zeros(lp.num_rows)
        for i in np.flatnonzero(peaks <= 0):
            if not _row_satisfied(lp.relations[i], 0.0, lp.rhs[i], self.feasibility_tol * (1 + abs(lp.rhs[i]))):
                logger.debug(f"Empty row {lp.row_names[i]} of {lp.name!r} is violated")
                return LpSolution(status=LpStatus.INFEASIBLE)
        kept = np.flatnonzero(peaks > 0)
        scale = 1.0 / peaks[kept]
        matrix = structural[kept] * scale[:, None]
        rhs = lp.rhs[kept] * scale
        relations = [lp.relations[i] for i in kept]
        flips = np.where(rhs < 0, -1.0, 1.0)
        matrix *= flips[:, None]
        rhs *= flips
        relations = [r.flipped() if f < 0 else r for r, f in zip(relations, flips)]

        n_rows = len(kept)
        slack_rows = [i for i, r in enumerate(relations) if r != Relation.EQ]
        artificial_rows = [i for i, r in enumerate(relations) if r != Relation.LE]
        n_slack, n_art = len(slack_rows), len(artificial_rows)
        n_real = n_struct + n_slack
        n_total = n_real + n_art

        tableau = np.zeros((n_rows, n_total + 1))
        tableau[:, :n_struct] = matrix
        tableau[:, -1] = rhs
        basis = np.empty(n_rows, dtype=int)
        for k, i in enumerate(slack_rows):
            tableau[i, n_struct + k] = 1.0 if relations[i] == Relation.LE else -1.0
            if relations[i] == Relation.LE:
                basis[i] = n_struct + k
        for k, i in enumerate(artificial_rows):
            tableau[i, n_real + k] = 1.0
            basis[i] = n_real + k
        standard = tableau[:, :n_real].copy()
        self.original = tableau.copy()

        alive = self.alive = np.arange(n_rows)
        if n_art:
            phase_one = np.zeros(n_total)
            phase_one[n_real:] = -1.0
            self._iterate(tableau, basis, phase_one, np.ones(n_total, dtype=bool))
            infeasibility = -float(phase_one[basis] @ tableau[:, -1])
            if infeasibility > self.feasibility_tol * max(1.0, float(rhs.max(initial=0.0))):
                logger.debug(f"{lp.name!r} infeasible (phase one residual {infeasibility:.3e})")
                return LpSolution(status=LpStatus.INFEASIBLE, iterations=self.iterations)

            redundant = []
            for r in range(n_rows):
                if basis[r] < n_real:
                    continue
                weights = np.abs(tableau[r, :n_real])
                j = int(np.argmax(weights)) if n_real else 0
                if n_real and weights[j] > self.pivot_tol:
                    self._pivot(tableau, basis, r, j)
                    self.iterations += 1
                else:
                    redundant.append(r)
            if redundant:
                keep_rows = np.setdiff1d(np.arange(n_rows), redundant)
                tableau, basis, alive = tableau[keep_rows], basis[keep_rows], alive[keep_rows]
                self.alive = alive

        phase_two = np.zeros(n_total)
        phase_two[:n_struct] = cost_structural
        allowed = np.zeros(n_total, dtype=bool)
        allowed[:n_real] = True
        status = self._iterate(tableau, basis, phase_two, allowed)
        if status == LpStatus.UNBOUNDED:
            return LpSolution(status=LpStatus.UNBOUNDED, iterations=self.iterations)

        basis_matrix = standard[alive][:, basis]
        try:
            basic_values = np.linalg.solve(basis_matrix, rhs[alive])
            duals_alive = np.linalg.solve(basis_matrix.T, phase_two[basis])
        except np.linalg.LinAlgError as e:
            raise NumericFailure(f"Final basis of {lp.name!r} is singular") from e
        magnitude = max(1.0, float(np.abs(basic_values).max(initial=0.0)))
        if basic_values.min(initial=0.0) < -self.feasibility_tol * magnitude:
            raise NumericFailure(
                f"Basic solution of {lp.name!r} is infeasible after refactorisation",
                residual=float(basic_values.min()),
            )
        basic_values = np.maximum(basic_values, 0.0)

        x_standard = np.zeros(n_real)
        x_standard[basis] = basic_values
        x = x_standard[: lp.num_variables].copy()
        x[free] -= x_standard[lp.num_variables : n_struct]

        duals_kept = np.zeros(n_rows)
        duals_kept[alive] = duals_alive
        duals = np.zeros(lp.num_rows)
        duals[kept] = duals_kept * flips * scale * sign

        return self._solution(x, duals, basis, n_struct, slack_rows, kept)

    def _solution(self, x, duals, basis, n_struct, slack_rows, kept) -> LpSolution:
        lp = self.lp
        names = lp.variable_names
        free_names = [v.name for v in lp.variables if v.is_free]
        column_names = list(names) + [f"{name}-" for name in free_names]
        column_names += [f"slack[{lp.row_names[kept[i]]}]" for i in slack_rows]

        lhs = lp.matrix @ x
        active = tuple(
            lp.row_names[i]
            for i in range(lp.num_rows)
            if lp.relations[i] == Relation.EQ
            or abs(lhs[i] - lp.rhs[i]) <= self.feasibility_tol * max(1.0, abs(lp.rhs[i]))
        )
        return LpSolution(
            status=LpStatus.OPTIMAL,
            objective=float(lp.objective @ x) + lp.objective_constant,
            primal={name: float(value) for name, value in zip(names, x)},
            dual={name: float(value) for name, value in zip(lp.row_names, duals)},
            basic_variables=tuple(column_names[j] for j in sorted(basis)),
            active_rows=active,
            iterations=self.iterations,
        )


def solve(lp: LinearProgram) -> LpSolution:
    started = time.perf_counter()
    try:
        solution = _Simplex(lp).run()
    except NumericFailure:
        LP_SOLVES.labels(status="failed").inc()
        logger.error(f"Simplex failed on {lp.name!r}", exc_info=True)
        raise
    LP_SOLVES.labels(status=solution.status.value).inc()
    LP_SOLVE_SECONDS.observe(time.perf_counter() - started)
    LP_PIVOTS.observe(solution.iterations)
    logger.debug(
        f"Solved {lp.name!r} ({lp.num_rows} rows, {lp.num_variables} columns): "
        f"{solution.status.value} after {solution.iterations} pivots"
    )
    return solution


def restrict_and_vertex(lp: LinearProgram, fixed: Mapping[str, float]) -> LpSolution:
    """Freeze the named variables and return a vertex optimum of what remains.

    Rows left without free coefficients must already hold at the frozen values.
    """
    names = lp.variable_names
    unknown = set(fixed) - set(names)
    if unknown:
        raise InvalidInput(f"Cannot fix unknown variables {sorted(unknown)}")
    fixed_columns = [names.index(name) for name in fixed]
    fixed_values = np.array([float(fixed[names[j]]) for j in fixed_columns])
    frozen = set(fixed_columns)
    open_columns = [j for j in range(lp.num_variables) if j not in frozen]

    rhs = lp.rhs - lp.matrix[:, fixed_columns] @ fixed_values
    reduced = lp.matrix[:, open_columns]
    live_rows = []
    for i in range(lp.num_rows):
        if np.any(reduced[i] != 0.0):
            live_rows.append(i)
            continue
        tol = settings.LP_FEASIBILITY_TOL * max(1.0, abs(lp.rhs[i]), float(np.abs(lp.matrix[i]).max(initial=0.0)))
        if not _row_satisfied(lp.relations[i], 0.0, rhs[i], tol):
            raise Infeasible(
                f"Frozen assignment violates {lp.row_names[i]} in {lp.name!r}",
                row=lp.row_names[i],
            )

    restricted = LinearProgram(
        sense=lp.sense,
        variables=tuple(lp.variables[j] for j in open_columns),
        objective=lp.objective[open_columns],
        matrix=reduced[live_rows],
        relations=tuple(lp.relations[i] for i in live_rows),
        rhs=rhs[live_rows],
        row_names=tuple(lp.row_names[i] for i in live_rows),
        objective_constant=lp.objective_constant + float(lp.objective[fixed_columns] @ fixed_values),
        name=f"{lp.name}|restricted",
    )
    solution = solve(restricted)
    if solution.status == LpStatus.INFEASIBLE:
        raise Infeasible(f"Restriction of {lp.name!r} is infeasible")

    primal = dict(solution.primal)
    primal.update({name: float(value) for name, value in fixed.items()})
    dual = {name: solution.dual.get(name, 0.0) for name in lp.row_names}
    return LpSolution(
        status=solution.status,
        objective=solution.objective,
        primal={name: primal[name] for name in names} if solution.is_optimal else primal,
        dual=dual,
        basic_variables=solution.basic_variables,
        active_rows=solution.active_rows,
        iterations=solution.iterations,
    )


def build_dual(lp: LinearProgram) -> LinearProgram:
    """Mechanical LP dual.

    A max program is first brought to rows of the form `<=` or `=`; a min
    program to `>=` or `=`. Dual variables are named `y[row]`, dual rows
    `dual[variable]`.
    """
    maximise = lp.sense == Sense.MAX
    natural = Relation.LE if maximise else Relation.GE
    matrix = lp.matrix.copy()
    rhs = lp.rhs.copy()
    for i, relation in enumerate(lp.relations):
        if relation not in (natural, Relation.EQ):
            matrix[i] *= -1.0
            rhs[i] *= -1.0

    builder = ProgramBuilder(Sense.MIN if maximise else Sense.MAX, name=f"dual({lp.name})")
    for i, row_name in enumerate(lp.row_names):
        lower = -np.inf if lp.relations[i] == Relation.EQ else 0.0
        builder.add_variable(f"y[{row_name}]", lower=lower, objective=rhs[i])
    dual_relation = Relation.GE if maximise else Relation.LE
    for j, variable in enumerate(lp.variables):
        terms = [(i, matrix[i, j]) for i in np.flatnonzero(matrix[:, j])]
        builder.add_constraint(
            f"dual[{variable.name}]",
            terms,
            Relation.EQ if variable.is_free else dual_relation,
            lp.objective[j],
        )
    builder.add_constant(lp.objective_constant)
    return builder.build()


def complementary_slackness(lp: LinearProgram, solution: LpSolution) -> float:
    """Largest |y_i * slack_i| over the rows of a solved program."""
    if not solution.is_optimal or lp.num_rows == 0:
        return 0.0
    x = solution.values(lp.variable_names)
    slack = lp.matrix @ x - lp.rhs
    duals = np.array([solution.dual[name] for name in lp.row_names])
    return float(np.max(np.abs(duals * slack)))


def duality_gap(lp: LinearProgram, solution: LpSolution | None = None) -> tuple[float, float]:
    """Primal optimum and the optimum of the materialised dual."""
    primal = solution or solve(lp)
    dual = solve(build_dual(lp))
    if not (primal.is_optimal and dual.is_optimal):
        raise NumericFailure(
            f"Duality check on {lp.name!r} needs two optimal solves "
            f"(primal {primal.status.value}, dual {dual.status.value})"
        )
    return primal.objective, dual.objective


def _format_terms(coefficients, names) -> str:
    parts = []
    for coefficient, name in zip(coefficients, names):
        if coefficient == 0.0:
            continue
        sign = "-" if coefficient < 0 else "+"
        parts.append(f"{sign} {abs(coefficient):.17g} {name}")
    text = " ".join(parts) if parts else "0"
    return text[2:] if text.startswith("+ ") else text


def dump_lp(lp: LinearProgram) -> str:
    """Plain-text LP in an lp_solve/CPLEX-like layout for external cross-checks."""
    names = lp.variable_names
    lines = ["maximize" if lp.sense == Sense.MAX else "minimize"]
    objective = _format_terms(lp.objective, names)
    if lp.objective_constant:
        objective += f" + {lp.objective_constant:.17g}"
    lines.append(f"  obj: {objective}")
    lines.append("subject to")
    for i, row_name in enumerate(lp.row_names):
        lines.append(f"  {row_name}: {_format_terms(lp.matrix[i], names)} {lp.relations[i].value} {lp.rhs[i]:.17g}")
    lines.append("bounds")
    for variable in lp.variables:
        lines.append(f"  {variable.name} free" if variable.is_free else f"  {variable.name} >= 0")
    lines.append("end")
    return "\n".join(lines) + "\n"
