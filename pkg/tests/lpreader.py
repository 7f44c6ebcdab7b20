"""Small independent reader for CPLEX LP files, used to check exported models.

Supports the subset the exporters emit: one objective, linear rows with
``<=``/``>=``/``=``, ``free`` bounds and a ``Binaries`` section. Anything else
raises ``LpSyntaxError`` with the offending line number.
"""

import re
from dataclasses import dataclass, field

import numpy as np

NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_.\[\]]*$")
NUMBER = re.compile(r"[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?$|[0-9]+\.$|inf$")
SECTIONS = {
    "minimize": "objective", "minimise": "objective", "minimum": "objective", "min": "objective",
    "subject to": "constraints", "such that": "constraints", "st": "constraints", "s.t.": "constraints",
    "bounds": "bounds", "bound": "bounds",
    "binaries": "binaries", "binary": "binaries", "bin": "binaries",
    "end": "end",
}


class LpSyntaxError(ValueError):
    pass


@dataclass
class LpModel:
    objective: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)  # (name, {var: coef}, sense, rhs)
    free: set = field(default_factory=set)
    binaries: list = field(default_factory=list)
    variables: list = field(default_factory=list)

    def _touch(self, var):
        if var not in self.variables:
            self.variables.append(var)


def _parse_expr(tokens, lineno):
    coeffs, sign, coef = {}, 1.0, None
    for tok in tokens:
        if tok in "+-":
            if coef is not None:
                raise LpSyntaxError(f"line {lineno}: dangling coefficient")
            sign = sign * (-1.0 if tok == "-" else 1.0)
        elif NUMBER.match(tok):
            if coef is not None:
                raise LpSyntaxError(f"line {lineno}: two numbers in a row")
            coef = float(tok)
        elif NAME.match(tok):
            coeffs[tok] = coeffs.get(tok, 0.0) + sign * (1.0 if coef is None else coef)
            sign, coef = 1.0, None
        else:
            raise LpSyntaxError(f"line {lineno}: unexpected token {tok!r}")
    if coef is not None:
        if coef != 0.0 or coeffs:
            raise LpSyntaxError(f"line {lineno}: constant term in expression")
    return coeffs


def _tokens(text):
    return re.findall(r"<=|>=|=<|=>|=|[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?|[+-]|[^\s+\-<>=]+", text)


def parse_lp(text):
    model = LpModel()
    section = None
    pending, start = [], 0
    seen_end = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key in SECTIONS:
            if pending:
                raise LpSyntaxError(f"line {start}: unterminated statement")
            section = SECTIONS[key]
            if section == "end":
                seen_end = True
            continue
        if seen_end:
            raise LpSyntaxError(f"line {lineno}: content after End")
        if section is None:
            raise LpSyntaxError(f"line {lineno}: content before the objective section")
        if section == "objective":
            body = line.split(":", 1)[1] if ":" in line else line
            for var, c in _parse_expr(_tokens(body), lineno).items():
                model.objective[var] = model.objective.get(var, 0.0) + c
                model._touch(var)
        elif section == "constraints":
            if not pending:
                start = lineno
            pending += _tokens(line)
            senses = [i for i, t in enumerate(pending) if t in ("<=", ">=", "=", "=<", "=>")]
            if not senses:
                continue
            i = senses[0]
            tail = pending[i + 1:]
            if len(senses) > 1 or not (len(tail) == 1 or (len(tail) == 2 and tail[0] in "+-")):
                raise LpSyntaxError(f"line {start}: malformed constraint")
            head = pending[:i]
            if not head or not head[0].endswith(":") or not NAME.match(head[0][:-1]):
                raise LpSyntaxError(f"line {start}: constraint without a name")
            name = head[0][:-1]
            if not NUMBER.match(tail[-1]):
                raise LpSyntaxError(f"line {start}: right-hand side is not a number")
            rhs = float("".join(tail))
            sense = {"=<": "<=", "=>": ">="}.get(pending[i], pending[i])
            coeffs = _parse_expr(head[1:], start)
            for var in coeffs:
                model._touch(var)
            model.rows.append((name, coeffs, sense, rhs))
            pending = []
        elif section == "bounds":
            parts = line.split()
            if len(parts) == 2 and parts[1].lower() == "free" and NAME.match(parts[0]):
                model.free.add(parts[0])
                model._touch(parts[0])
            else:
                raise LpSyntaxError(f"line {lineno}: unsupported bound {line!r}")
        elif section == "binaries":
            for var in line.split():
                if not NAME.match(var):
                    raise LpSyntaxError(f"line {lineno}: bad variable name {var!r}")
                model.binaries.append(var)
                model._touch(var)
    if not seen_end:
        raise LpSyntaxError("missing End")
    if pending:
        raise LpSyntaxError(f"line {start}: unterminated statement")
    return model


def solve_lp_model(model):
    """Solve a parsed model with scipy's HiGHS interface; returns the optimal objective."""
    from scipy.optimize import Bounds, LinearConstraint, milp

    names = model.variables
    index = {v: i for i, v in enumerate(names)}
    n = len(names)
    c = np.zeros(n)
    for v, coef in model.objective.items():
        c[index[v]] = coef
    A = np.zeros((len(model.rows), n))
    lo = np.full(len(model.rows), -np.inf)
    hi = np.full(len(model.rows), np.inf)
    for i, (_, coeffs, sense, rhs) in enumerate(model.rows):
        for v, coef in coeffs.items():
            A[i, index[v]] = coef
        if sense in ("<=", "="):
            hi[i] = rhs
        if sense in (">=", "="):
            lo[i] = rhs
    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    integrality = np.zeros(n)
    for v in model.free:
        lb[index[v]] = -np.inf
    for v in model.binaries:
        lb[index[v]], ub[index[v]], integrality[index[v]] = 0.0, 1.0, 1
    res = milp(c, constraints=LinearConstraint(A, lo, hi), bounds=Bounds(lb, ub),
               integrality=integrality, options={"mip_rel_gap": 1e-12})
    if not res.success:
        raise RuntimeError(f"external solve failed: {res.message}")
    return float(res.fun), {v: float(res.x[index[v]]) for v in names}
