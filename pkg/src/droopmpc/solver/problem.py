"""Mixed-integer bilinear programs with convex quadratic epigraph atoms.

A :class:`MiblpProblem` holds

* bounded variables, continuous or binary;
* linear rows ``sum a_j x_j (<=|=|>=) rhs``;
* bilinear links ``x_p = x_a * x_b`` (``x_b`` is the preferred branching factor);
* quadratic atoms ``x_e >= weight * (const + sum g_j x_j)**2`` with ``weight >= 0``;
* a linear objective.

The text format has sections ``VARS``, ``LIN``, ``BILIN``, ``QUAD``, ``EPI``
and ``OBJ``, one entity per line.  Floats are written with ``repr`` so a
write/read cycle is bit exact.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, TextIO, Tuple, Union

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"
SENSES = ("<=", "=", ">=")


class ProblemError(ValueError):
    """Malformed problem data."""


@dataclass
class Variable:
    name: str
    kind: str
    lower: float
    upper: float
    priority: float = 1.0  # branching weight, scales violations when picking a split


@dataclass
class LinearConstraint:
    coefs: Dict[int, float]
    sense: str
    rhs: float
    name: str = ""


@dataclass
class BilinearLink:
    product: int
    factor_a: int
    factor_b: int


@dataclass
class QuadAtom:
    weight: float
    coefs: Dict[int, float]
    constant: float
    epigraph: int

    def expression(self, values: np.ndarray) -> float:
        return self.constant + sum(c * values[j] for j, c in self.coefs.items())

    def value(self, values: np.ndarray) -> float:
        e = self.expression(values)
        return self.weight * e * e


@dataclass
class CompiledProblem:
    """Dense array view of a problem, rebuilt when the problem changes."""

    A: np.ndarray
    row_lower: np.ndarray
    row_upper: np.ndarray
    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    binary: np.ndarray
    link_p: np.ndarray
    link_a: np.ndarray
    link_b: np.ndarray
    quad_weight: np.ndarray
    quad_const: np.ndarray
    quad_epi: np.ndarray
    quad_G: np.ndarray  # (n_atoms, n) dense expression coefficients
    priority: np.ndarray = None


@dataclass
class MiblpProblem:
    variables: List[Variable] = field(default_factory=list)
    constraints: List[LinearConstraint] = field(default_factory=list)
    links: List[BilinearLink] = field(default_factory=list)
    quad_atoms: List[QuadAtom] = field(default_factory=list)
    objective: Dict[int, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    epigraph_vars: List[int] = field(default_factory=list)
    meta: dict = field(default_factory=dict, compare=False, repr=False)
    _index: Dict[str, int] = field(default_factory=dict, compare=False, repr=False)
    _compiled: Optional[CompiledProblem] = field(default=None, compare=False, repr=False)

    # -- construction -------------------------------------------------------
    def add_var(self, name: str, lower: float, upper: float, kind: str = CONTINUOUS,
                priority: float = 1.0) -> int:
        if name in self._index:
            raise ProblemError(f"duplicate variable {name!r}")
        if kind not in (CONTINUOUS, BINARY):
            raise ProblemError(f"unknown variable kind {kind!r}")
        if kind == BINARY:
            lower, upper = max(0.0, float(lower)), min(1.0, float(upper))
        if not priority > 0:
            raise ProblemError("branching priority must be positive")
        self.variables.append(Variable(name, kind, float(lower), float(upper), float(priority)))
        self._index[name] = len(self.variables) - 1
        self._compiled = None
        return len(self.variables) - 1

    def add_constraint(self, coefs: Dict[int, float], sense: str, rhs: float, name: str = "") -> int:
        if sense not in SENSES:
            raise ProblemError(f"unknown sense {sense!r}")
        clean = {int(j): float(a) for j, a in coefs.items() if a != 0.0}
        self._check_refs(clean)
        self.constraints.append(LinearConstraint(clean, sense, float(rhs), name))
        self._compiled = None
        return len(self.constraints) - 1

    def add_link(self, product: int, factor_a: int, factor_b: int) -> int:
        self._check_refs((product, factor_a, factor_b))
        self.links.append(BilinearLink(product, factor_a, factor_b))
        self._compiled = None
        return len(self.links) - 1

    def add_quad(self, weight: float, coefs: Dict[int, float], constant: float, epigraph: int) -> int:
        if weight < 0:
            raise ProblemError("quadratic atom weight must be nonnegative")
        clean = {int(j): float(a) for j, a in coefs.items() if a != 0.0}
        self._check_refs(list(clean) + [epigraph])
        self.quad_atoms.append(QuadAtom(float(weight), clean, float(constant), int(epigraph)))
        self._compiled = None
        return len(self.quad_atoms) - 1

    def set_objective(self, coefs: Dict[int, float], constant: float = 0.0) -> None:
        self._check_refs(coefs)
        self.objective = {int(j): float(a) for j, a in coefs.items() if a != 0.0}
        self.objective_constant = float(constant)
        self._compiled = None

    def _check_refs(self, refs: Iterable[int]) -> None:
        n = len(self.variables)
        for j in refs:
            if not 0 <= int(j) < n:
                raise ProblemError(f"reference to unknown variable index {j}")

    # -- queries ------------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"no variable named {name!r}") from None

    def names(self) -> List[str]:
        return [v.name for v in self.variables]

    def binaries(self) -> List[int]:
        return [j for j, v in enumerate(self.variables) if v.kind == BINARY]

    def check(self) -> None:
        """Raise :class:`ProblemError` on violated structural invariants."""
        for v in self.variables:
            if not (np.isfinite(v.lower) and np.isfinite(v.upper)):
                raise ProblemError(f"variable {v.name} needs finite bounds")
            if v.lower > v.upper:
                raise ProblemError(f"empty box for {v.name}: [{v.lower}, {v.upper}]")
        for atom in self.quad_atoms:
            if atom.weight < 0:
                raise ProblemError("nonconvex quadratic atom")
        for ln in self.links:
            a, b = self.variables[ln.factor_a], self.variables[ln.factor_b]
            p = self.variables[ln.product]
            corners = [a.lower * b.lower, a.lower * b.upper, a.upper * b.lower, a.upper * b.upper]
            if p.upper < min(corners) - 1e-9 or p.lower > max(corners) + 1e-9:
                raise ProblemError(f"product {p.name} bounds incompatible with factor bounds")

    def compiled(self) -> CompiledProblem:
        if self._compiled is None:
            self._compiled = self._compile()
        return self._compiled

    def _compile(self) -> CompiledProblem:
        n, m = self.n_vars, len(self.constraints)
        A = np.zeros((m, n))
        rl = np.empty(m)
        ru = np.empty(m)
        for i, con in enumerate(self.constraints):
            for j, a in con.coefs.items():
                A[i, j] = a
            rl[i] = con.rhs if con.sense in ("=", ">=") else -np.inf
            ru[i] = con.rhs if con.sense in ("=", "<=") else np.inf
        c = np.zeros(n)
        for j, a in self.objective.items():
            c[j] = a
        G = np.zeros((len(self.quad_atoms), n))
        for k, atom in enumerate(self.quad_atoms):
            for j, g in atom.coefs.items():
                G[k, j] = g
        return CompiledProblem(
            A=A, row_lower=rl, row_upper=ru, c=c,
            lower=np.array([v.lower for v in self.variables]),
            upper=np.array([v.upper for v in self.variables]),
            binary=np.array([v.kind == BINARY for v in self.variables], dtype=bool),
            link_p=np.array([ln.product for ln in self.links], dtype=np.int64),
            link_a=np.array([ln.factor_a for ln in self.links], dtype=np.int64),
            link_b=np.array([ln.factor_b for ln in self.links], dtype=np.int64),
            quad_weight=np.array([q.weight for q in self.quad_atoms]),
            quad_const=np.array([q.constant for q in self.quad_atoms]),
            quad_epi=np.array([q.epigraph for q in self.quad_atoms], dtype=np.int64),
            quad_G=G,
            priority=np.array([v.priority for v in self.variables], dtype=float),
        )

    def objective_value(self, values: np.ndarray) -> float:
        return self.objective_constant + float(sum(a * values[j] for j, a in self.objective.items()))


# -- violations ----------------------------------------------------------------

@dataclass
class ViolationReport:
    """Largest violation per category for one candidate point."""

    bounds: float = 0.0
    linear: float = 0.0
    integrality: float = 0.0
    bilinear: float = 0.0
    quadratic: float = 0.0
    worst_bound: str = ""
    worst_row: str = ""

    @property
    def max_violation(self) -> float:
        return max(self.bounds, self.linear, self.integrality, self.bilinear, self.quadratic)

    def ok(self, tol: float) -> bool:
        return self.max_violation <= tol


def validate_solution(problem: MiblpProblem, values, tol: float = 1e-7) -> ViolationReport:
    """Evaluate every bound, row, integrality condition, link and atom at ``values``.

    Report-only: ``tol`` is kept for symmetry with callers that pass it to
    :meth:`ViolationReport.ok`.
    """
    x = np.asarray(values, dtype=float)
    if x.shape != (problem.n_vars,):
        raise ProblemError(f"expected {problem.n_vars} values, got shape {x.shape}")
    cp = problem.compiled()
    rep = ViolationReport()
    below = cp.lower - x
    above = x - cp.upper
    viol = np.maximum(np.maximum(below, above), 0.0)
    if viol.size:
        k = int(np.argmax(viol))
        rep.bounds = float(viol[k])
        rep.worst_bound = problem.variables[k].name if rep.bounds > 0 else ""
    if cp.A.shape[0]:
        act = cp.A @ x
        rv = np.maximum(np.maximum(cp.row_lower - act, act - cp.row_upper), 0.0)
        k = int(np.argmax(rv))
        rep.linear = float(rv[k])
        if rep.linear > 0:
            rep.worst_row = problem.constraints[k].name or f"row{k}"
    if cp.binary.any():
        xb = x[cp.binary]
        rep.integrality = float(np.max(np.abs(xb - np.round(xb))))
    if cp.link_p.size:
        rep.bilinear = float(np.max(np.abs(x[cp.link_p] - x[cp.link_a] * x[cp.link_b])))
    if cp.quad_epi.size:
        expr = cp.quad_G @ x + cp.quad_const
        rep.quadratic = float(max(0.0, np.max(cp.quad_weight * expr * expr - x[cp.quad_epi])))
    return rep


def max_bilinear_residual(problem: MiblpProblem, values) -> float:
    cp = problem.compiled()
    if not cp.link_p.size:
        return 0.0
    x = np.asarray(values, dtype=float)
    return float(np.max(np.abs(x[cp.link_p] - x[cp.link_a] * x[cp.link_b])))


# -- text format -----------------------------------------------------------------

def _num(v: float) -> str:
    return repr(float(v))


def _terms(coefs: Dict[int, float], names: List[str]) -> str:
    return " ".join(f"{names[j]}:{_num(a)}" for j, a in coefs.items())


def dump_problem(problem: MiblpProblem, fh: TextIO) -> None:
    names = problem.names()
    fh.write("VARS\n")
    for v in problem.variables:
        extra = "" if v.priority == 1.0 else f" {_num(v.priority)}"
        fh.write(f"{v.name} {v.kind} {_num(v.lower)} {_num(v.upper)}{extra}\n")
    fh.write("LIN\n")
    for i, con in enumerate(problem.constraints):
        label = con.name or f"r{i}"
        fh.write(f"{label} {con.sense} {_num(con.rhs)} {_terms(con.coefs, names)}".rstrip() + "\n")
    fh.write("BILIN\n")
    for ln in problem.links:
        fh.write(f"{names[ln.product]} {names[ln.factor_a]} {names[ln.factor_b]}\n")
    fh.write("QUAD\n")
    for q in problem.quad_atoms:
        fh.write(f"{names[q.epigraph]} {_num(q.weight)} {_num(q.constant)} "
                 f"{_terms(q.coefs, names)}".rstrip() + "\n")
    fh.write("EPI\n")
    for j in problem.epigraph_vars:
        fh.write(names[j] + "\n")
    fh.write("OBJ\n")
    fh.write(f"{_num(problem.objective_constant)} {_terms(problem.objective, names)}".rstrip() + "\n")
    fh.write("END\n")


def dumps_problem(problem: MiblpProblem) -> str:
    import io

    buf = io.StringIO()
    dump_problem(problem, buf)
    return buf.getvalue()


_SECTIONS = ("VARS", "LIN", "BILIN", "QUAD", "EPI", "OBJ", "END")


def _parse_terms(tokens: List[str], prob: MiblpProblem, lineno: int) -> Dict[int, float]:
    out = {}
    for tok in tokens:
        name, sep, val = tok.rpartition(":")
        if not sep:
            raise ProblemError(f"line {lineno}: expected name:coef, got {tok!r}")
        out[prob.index(name)] = float(val)
    return out


def load_problem(fh: Union[TextIO, Iterable[str]]) -> MiblpProblem:
    prob = MiblpProblem()
    section = None
    for lineno, raw in enumerate(fh, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line in _SECTIONS:
            section = line
            continue
        tok = line.split()
        try:
            if section == "VARS":
                prio = float(tok[4]) if len(tok) > 4 else 1.0
                prob.add_var(tok[0], float(tok[2]), float(tok[3]), tok[1], prio)
            elif section == "LIN":
                prob.add_constraint(_parse_terms(tok[3:], prob, lineno), tok[1], float(tok[2]), tok[0])
            elif section == "BILIN":
                prob.add_link(prob.index(tok[0]), prob.index(tok[1]), prob.index(tok[2]))
            elif section == "QUAD":
                prob.add_quad(float(tok[1]), _parse_terms(tok[3:], prob, lineno), float(tok[2]),
                              prob.index(tok[0]))
            elif section == "EPI":
                prob.epigraph_vars.append(prob.index(tok[0]))
            elif section == "OBJ":
                prob.set_objective(_parse_terms(tok[1:], prob, lineno), float(tok[0]))
            else:
                raise ProblemError(f"line {lineno}: content outside a section")
        except (IndexError, KeyError, ValueError) as exc:
            if isinstance(exc, ProblemError) and str(exc).startswith("line"):
                raise
            raise ProblemError(f"line {lineno}: {exc}") from exc
    return prob


def loads_problem(text: str) -> MiblpProblem:
    return load_problem(text.splitlines())


def problem_signature(problem: MiblpProblem) -> Tuple:
    """Hashable structural fingerprint, used by tests for round-trip equality."""
    return (
        tuple((v.name, v.kind, v.lower, v.upper, v.priority) for v in problem.variables),
        tuple((tuple(c.coefs.items()), c.sense, c.rhs) for c in problem.constraints),
        tuple((l.product, l.factor_a, l.factor_b) for l in problem.links),
        tuple((q.weight, tuple(q.coefs.items()), q.constant, q.epigraph) for q in problem.quad_atoms),
        tuple(problem.objective.items()), problem.objective_constant, tuple(problem.epigraph_vars),
    )
