"""Plain-text instance files (``acrab-instance v1``).

Layout::

    acrab-instance v1
    # provenance line(s)
    [mdp]
    n_states S
    n_actions A
    discount g
    initial_dist      <1 row of S>
    reward_mean       <S rows of A>
    reward_kind       <S rows of A tokens: det | bern>
    transition        <S*A rows of S, row (s, a) at index s*A + a>
    [behavior]        <S rows of A>
    [target]          <S rows of A>
    [fclass]
    v_max x
    count m           <m*S rows of A>
    [wclass]
    b_w x
    count m           <m*S rows of A>
    [audit]
    count m           <m*S rows of A>

Floats are written with ``repr`` so ``load(save(x)) == x`` bit for bit.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .classes import AuditPolicySet, ValueClass, WeightClass
from .errors import ValidationError
from .instances import InstanceFile
from .mdp import TabularMdp

HEADER = "acrab-instance v1"
SECTIONS = ("mdp", "behavior", "target", "fclass", "wclass", "audit")


def _rows(arr: np.ndarray) -> list[str]:
    arr = np.atleast_2d(arr)
    return [" ".join(repr(float(x)) for x in row) for row in arr]


def dumps_instance(inst: InstanceFile) -> str:
    m = inst.mdp
    S, A = m.n_states, m.n_actions
    out = [HEADER]
    out += [f"# {line}" for line in inst.provenance.splitlines()] if inst.provenance else []
    out += ["[mdp]", f"n_states {S}", f"n_actions {A}", f"discount {m.discount!r}"]
    out += ["initial_dist"] + _rows(m.initial_dist[None])
    out += ["reward_mean"] + _rows(m.reward_mean)
    out += ["reward_kind"] + [" ".join(row) for row in m.reward_kind]
    out += ["transition"] + _rows(m.transition.reshape(S * A, S))
    out += ["[behavior]"] + _rows(inst.behavior)
    out += ["[target]"] + _rows(inst.target)
    out += ["[fclass]", f"v_max {inst.f_class.v_max!r}", f"count {len(inst.f_class)}"]
    out += _rows(inst.f_class.members.reshape(-1, A))
    out += ["[wclass]", f"b_w {inst.w_class.b_w!r}", f"count {len(inst.w_class)}"]
    out += _rows(inst.w_class.members.reshape(-1, A))
    out += ["[audit]", f"count {len(inst.audit)}"]
    out += _rows(inst.audit.members.reshape(-1, A))
    return "\n".join(out) + "\n"


def save_instance(inst: InstanceFile, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(inst))


class _Cursor:
    def __init__(self, lines: list[str]):
        self.lines = lines
        self.i = 0

    def next(self) -> str:
        if self.i >= len(self.lines):
            raise ValidationError("unexpected end of instance file")
        line = self.lines[self.i]
        self.i += 1
        return line

    def keyword(self, name: str) -> str:
        parts = self.next().split(None, 1)
        if parts[0] != name:
            raise ValidationError(f"expected {name!r}, found {parts[0]!r}")
        return parts[1] if len(parts) > 1 else ""

    def section(self, name: str) -> None:
        line = self.next()
        if line != f"[{name}]":
            raise ValidationError(f"expected section [{name}], found {line!r}")

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        data = []
        for _ in range(rows):
            vals = self.next().split()
            if len(vals) != cols:
                raise ValidationError(f"expected {cols} columns, found {len(vals)}")
            data.append([float(v) for v in vals])
        return np.array(data)

    def tokens(self, rows: int, cols: int) -> np.ndarray:
        data = [self.next().split() for _ in range(rows)]
        if any(len(r) != cols for r in data):
            raise ValidationError("bad reward_kind row")
        return np.array(data)


def loads_instance(text: str) -> InstanceFile:
    raw = text.splitlines()
    if not raw or raw[0].strip() != HEADER:
        raise ValidationError(f"missing header line {HEADER!r}")
    provenance = [ln[2:] if ln.startswith("# ") else ln[1:] for ln in raw[1:] if ln.startswith("#")]
    body = [ln.strip() for ln in raw[1:] if ln.strip() and not ln.startswith("#")]
    cur = _Cursor(body)
    try:
        cur.section("mdp")
        S = int(cur.keyword("n_states"))
        A = int(cur.keyword("n_actions"))
        gamma = float(cur.keyword("discount"))
        cur.keyword("initial_dist")
        rho = cur.matrix(1, S)[0]
        cur.keyword("reward_mean")
        r = cur.matrix(S, A)
        cur.keyword("reward_kind")
        kinds = cur.tokens(S, A)
        cur.keyword("transition")
        P = cur.matrix(S * A, S).reshape(S, A, S)
        mdp = TabularMdp(P, r, gamma, rho, kinds)
        cur.section("behavior")
        behavior = cur.matrix(S, A)
        cur.section("target")
        target = cur.matrix(S, A)
        cur.section("fclass")
        v_max = float(cur.keyword("v_max"))
        m = int(cur.keyword("count"))
        f_class = ValueClass(list(cur.matrix(m * S, A).reshape(m, S, A)), v_max=v_max)
        cur.section("wclass")
        b_w = float(cur.keyword("b_w"))
        m = int(cur.keyword("count"))
        w_class = WeightClass(list(cur.matrix(m * S, A).reshape(m, S, A)), b_w=b_w)
        cur.section("audit")
        m = int(cur.keyword("count"))
        audit = AuditPolicySet(list(cur.matrix(m * S, A).reshape(m, S, A)))
    except (IndexError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed instance file: {exc}") from exc
    if cur.i != len(body):
        raise ValidationError("trailing content after [audit]")
    from .mdp import validate_policy
    validate_policy(behavior, S, A)
    validate_policy(target, S, A)
    return InstanceFile(mdp, behavior, target, f_class, w_class, audit, provenance="\n".join(provenance))


def load_instance(path: str | Path) -> InstanceFile:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"instance file not found: {path}")
    return loads_instance(path.read_text())
