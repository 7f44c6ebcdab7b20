"""Minimal writer for linear and mixed-integer models in CPLEX LP text format."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import IO, Iterable

TERMS_PER_LINE = 6


@dataclass
class Constraint:
    name: str
    coeffs: list[tuple[str, float]]
    sense: str  # one of "<=", ">=", "="
    rhs: float


@dataclass
class LinearModel:
    """A minimisation model; variables are listed in declaration order."""

    objective: list[tuple[str, float]]
    constraints: list[Constraint] = field(default_factory=list)
    free: list[str] = field(default_factory=list)
    binaries: list[str] = field(default_factory=list)
    comment: str = ""

    @property
    def variables(self) -> list[str]:
        seen = dict.fromkeys(name for name, _ in self.objective)
        for c in self.constraints:
            seen.update(dict.fromkeys(name for name, _ in c.coeffs))
        seen.update(dict.fromkeys(self.free))
        seen.update(dict.fromkeys(self.binaries))
        return list(seen)


def _num(x: float) -> str:
    # repr round-trips doubles exactly
    return repr(float(x))


def _expression(terms: Iterable[tuple[str, float]], keep_zero: bool = False) -> list[str]:
    pieces = []
    for name, coef in terms:
        coef = float(coef)
        if coef == 0.0 and not keep_zero:
            continue
        sign = "-" if coef < 0 else "+"
        pieces.append(f"{sign} {_num(abs(coef))} {name}")
    if not pieces:
        return ["0"]
    if pieces[0].startswith("+ "):
        pieces[0] = pieces[0][2:]
    return pieces


def _wrap(head: str, pieces: list[str], tail: str = "") -> list[str]:
    lines = []
    for i in range(0, len(pieces), TERMS_PER_LINE):
        chunk = " ".join(pieces[i:i + TERMS_PER_LINE])
        lines.append((" " + head + " " if i == 0 else "    ") + chunk)
    if tail:
        lines[-1] += " " + tail
    return lines


def format_model(model: LinearModel) -> str:
    out = []
    for line in model.comment.splitlines():
        out.append("\\ " + line)
    out.append("Minimize")
    out += _wrap("obj:", _expression(model.objective, keep_zero=True))
    out.append("Subject To")
    for c in model.constraints:
        out += _wrap(f"{c.name}:", _expression(c.coeffs), f"{c.sense} {_num(c.rhs)}")
    out.append("Bounds")
    for name in model.free:
        out.append(f" {name} free")
    if model.binaries:
        out.append("Binaries")
        for i in range(0, len(model.binaries), TERMS_PER_LINE):
            out.append(" " + " ".join(model.binaries[i:i + TERMS_PER_LINE]))
    out.append("End")
    return "\n".join(out) + "\n"


def write_model(model: LinearModel, sink: str | os.PathLike | IO[str]) -> None:
    """Write ``model`` to a path or an open text stream."""
    text = format_model(model)
    if hasattr(sink, "write"):
        sink.write(text)
        return
    with open(sink, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
