"""Lukasiewicz fuzzy semantics, grounded theories and best satisfiability.

Closed formulas are compiled once against a grounding and a domain into a
flat program of vectorized nodes:

* every atom occurrence becomes a gather from its predicate's table of
  distinct argument tuples, so each predicate runs one batched forward
  pass per evaluation;
* quantifiers are expanded into explicit substitution lists and reduced by
  segment (harmonic mean for ``forall``, max for ``exists``);
* ground clauses that differ only in their constants share one template,
  evaluated as a single vector over all instances.

Because the substitution structure does not depend on learnable weights,
the program is reused across training epochs and also supports the
reverse pass that :mod:`rwtn.training` needs.

Quantifier domains are grouped (one group per scene): a quantifier ranges
over tuples drawn from a single group, and a nested quantifier stays inside
the group of the enclosing substitution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .fol import (
    And, Apply, Atom, Constant, Exists, ForAll, Formula, Implies, Not, Or, Signature,
    Variable, free_variables, print_formula, print_term,
)
from .grounders import LinearFunctionParams, PartWholeTable, Predicate, ground_function

EPS = 1e-6


class EvaluationError(ValueError):
    pass


# -- connectives -----------------------------------------------------------

def lnot(a):
    return np.clip(1.0 - np.asarray(a, dtype=np.float64), 0.0, 1.0)


def land(a, b):
    return np.clip(np.maximum(0.0, np.asarray(a, dtype=np.float64) + b - 1.0), 0.0, 1.0)


def lor(a, b):
    return np.clip(np.minimum(1.0, np.asarray(a, dtype=np.float64) + b), 0.0, 1.0)


def limplies(a, b):
    return np.clip(np.minimum(1.0, 1.0 - np.asarray(a, dtype=np.float64) + b), 0.0, 1.0)


_CONNECTIVES = {"not": lnot, "and": land, "or": lor, "implies": limplies}


def eval_connectives(op: str, a: float, b: float | None = None) -> float:
    """Lukasiewicz truth function ``op`` in {"not", "and", "or", "implies"}."""
    fn = _CONNECTIVES[op]
    out = fn(a) if op == "not" else fn(a, b)
    return float(out) if np.ndim(out) == 0 else out


def harmonic_mean(values, eps: float = EPS) -> float:
    """Harmonic mean with every value floored at ``eps``."""
    v = np.maximum(np.asarray(values, dtype=np.float64), eps)
    if v.size == 0:
        raise EvaluationError("harmonic mean of nothing")
    return float(v.size / np.sum(1.0 / v))


# -- groundings and domains ------------------------------------------------

@dataclass
class Grounding:
    constant_map: dict[str, np.ndarray] = field(default_factory=dict)
    function_map: dict[str, LinearFunctionParams] = field(default_factory=dict)
    predicate_map: dict[str, Predicate] = field(default_factory=dict)


@dataclass
class Domain:
    """Element vectors split into quantification groups.

    ``names`` optionally ties rows to constant symbols so that ground atoms
    and quantified atoms over the same object share evaluations.
    """

    vectors: np.ndarray
    groups: tuple[np.ndarray, ...]
    names: tuple[str, ...] | None = None

    @classmethod
    def single(cls, vectors) -> "Domain":
        V = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        return cls(V, (np.arange(V.shape[0]),))

    @classmethod
    def grouped(cls, groups: Sequence, names: Sequence[Sequence[str]] | None = None) -> "Domain":
        blocks = [np.atleast_2d(np.asarray(g, dtype=np.float64)) for g in groups]
        idx, start = [], 0
        for b in blocks:
            idx.append(np.arange(start, start + b.shape[0]))
            start += b.shape[0]
        V = np.vstack(blocks) if blocks else np.zeros((0, 0))
        flat = tuple(n for group in names for n in group) if names is not None else None
        return cls(V, tuple(idx), flat)


def as_domain(domain) -> Domain | None:
    if domain is None or isinstance(domain, Domain):
        return domain
    if isinstance(domain, np.ndarray) and domain.ndim == 2:
        return Domain.single(domain)
    items = list(domain)
    if items and np.ndim(items[0]) == 2:
        return Domain.grouped(items)
    return Domain.single(np.array(items, dtype=np.float64))


@dataclass
class GroundedTheory:
    clauses: list[Formula]
    grounding: Grounding
    signature: Signature | None = None

    def __post_init__(self):
        for c in self.clauses:
            fv = free_variables(c)
            if fv:
                raise EvaluationError(f"clause {print_formula(c)!r} has free variables {fv}")


# -- compiled programs -----------------------------------------------------

@dataclass
class _Env:
    uid: int
    n: int
    binds: dict[str, np.ndarray]
    group: np.ndarray | None


@dataclass
class _Node:
    op: str
    n: int
    children: tuple[int, ...] = ()
    pred: str | None = None
    index: np.ndarray | None = None  # atom gather index / aggregate segment ids
    request: tuple[int, int] | None = None


@dataclass
class Forward:
    values: list[np.ndarray]
    pred_values: dict[str, np.ndarray]
    caches: dict[str, object]
    clause_truths: np.ndarray
    satisfiability: float


class Program:
    """A set of closed formulas compiled against a grounding and a domain."""

    def __init__(self, clauses: Sequence[Formula], grounding: Grounding, domain=None,
                 eps: float = EPS, group_templates: bool = True):
        self.grounding = grounding
        self.domain = as_domain(domain)
        self.eps = eps
        self.nodes: list[_Node] = []
        self._memo: dict = {}
        self._expansions: dict = {}
        self._env_count = 0
        self._top_envs: dict[int, _Env] = {}
        self._requests: dict[str, list[np.ndarray]] = {}
        self._request_sizes: dict[str, int] = {}
        self._init_rows()
        self.roots: list[int] = []
        self.clause_slices: list[tuple[int, np.ndarray]] = []
        self.n_clauses = len(clauses)
        if group_templates:
            batches = _template_batches(clauses)
        else:
            batches = [(c, [], [i]) for i, c in enumerate(clauses)]
        for template, slot_constants, positions in batches:
            if any(not v.startswith("$") for v in free_variables(template)):
                raise EvaluationError(f"formula {print_formula(template)!r} is not closed")
            n = len(positions)
            binds = {f"${j}": np.array([self._constant_row(cs[j]) for cs in slot_constants], dtype=np.int64)
                     for j in range(len(slot_constants[0]) if slot_constants else 0)}
            env = self._new_env(n, binds, None)
            root = self._compile(template, env)
            self.roots.append(root)
            self.clause_slices.append((root, np.asarray(positions, dtype=np.int64)))
        self._finalize()

    # construction ---------------------------------------------------------

    def _init_rows(self):
        rows: list[np.ndarray] = []
        self._const_rows: dict[str, int] = {}
        if self.domain is not None and self.domain.vectors.size:
            rows.extend(self.domain.vectors)
            if self.domain.names is not None:
                for i, name in enumerate(self.domain.names):
                    self._const_rows.setdefault(name, i)
        self._rows = rows

    def _constant_row(self, name: str) -> int:
        row = self._const_rows.get(name)
        if row is None:
            vec = self.grounding.constant_map.get(name)
            if vec is None:
                raise EvaluationError(f"constant {name!r} is not grounded")
            row = len(self._rows)
            self._push_rows(np.asarray(vec, dtype=np.float64)[None, :], f"constant {name!r}")
            self._const_rows[name] = row
        return row

    def _push_rows(self, block: np.ndarray, what: str) -> None:
        # every object of the domain lives in one vector space
        if self._rows and block.shape[1] != self._rows[0].shape[0]:
            raise EvaluationError(f"{what} has length {block.shape[1]}, "
                                  f"other objects have length {self._rows[0].shape[0]}")
        self._rows.extend(block)

    def _new_env(self, n, binds, group) -> _Env:
        if not binds and group is None:
            # constant-free clauses of equal batch size share expansions
            shared = self._top_envs.get(n)
            if shared is not None:
                return shared
        self._env_count += 1
        env = _Env(self._env_count, n, binds, group)
        if not binds and group is None:
            self._top_envs[n] = env
        return env

    def _add(self, key, node: _Node) -> int:
        if key is not None:
            hit = self._memo.get(key)
            if hit is not None:
                return hit
        self.nodes.append(node)
        nid = len(self.nodes) - 1
        if key is not None:
            self._memo[key] = nid
        return nid

    def _term_rows(self, t, env: _Env) -> np.ndarray:
        if isinstance(t, Variable):
            return env.binds[t.name]
        if isinstance(t, Constant):
            return np.full(env.n, self._constant_row(t.symbol), dtype=np.int64)
        params = self.grounding.function_map.get(t.function)
        if params is None:
            raise EvaluationError(f"function {t.function!r} is not grounded")
        arg_rows = [self._term_rows(a, env) for a in t.args]
        table = np.asarray(self._rows)
        args = np.hstack([table[r] for r in arg_rows])
        out = ground_function(params, args)
        start = len(self._rows)
        self._push_rows(np.atleast_2d(out), f"value of function {t.function!r}")
        return np.arange(start, start + env.n, dtype=np.int64)

    def _compile(self, f: Formula, env: _Env) -> int:
        if isinstance(f, Atom):
            if f.predicate not in self.grounding.predicate_map:
                raise EvaluationError(f"predicate {f.predicate!r} is not grounded")
            key = ("atom", f.predicate, tuple(print_term(t) for t in f.terms), env.uid)
            hit = self._memo.get(key)
            if hit is not None:
                return hit
            tuples = np.stack([self._term_rows(t, env) for t in f.terms], axis=1)
            reqs = self._requests.setdefault(f.predicate, [])
            offset = self._request_sizes.get(f.predicate, 0)
            reqs.append(tuples)
            self._request_sizes[f.predicate] = offset + env.n
            return self._add(key, _Node("atom", env.n, pred=f.predicate, request=(offset, env.n)))
        if isinstance(f, Not):
            c = self._compile(f.body, env)
            return self._add(("not", c), _Node("not", env.n, (c,)))
        if isinstance(f, (And, Or, Implies)):
            a = self._compile(f.left, env)
            b = self._compile(f.right, env)
            op = {And: "and", Or: "or", Implies: "implies"}[type(f)]
            return self._add((op, a, b), _Node(op, env.n, (a, b)))
        if isinstance(f, (ForAll, Exists)):
            inner, seg = self._expand(env, f.vars)
            body = self._compile(f.body, inner)
            op = "forall" if isinstance(f, ForAll) else "exists"
            return self._add((op, body, env.uid), _Node(op, env.n, (body,), index=seg))
        raise TypeError(f"not a formula: {f!r}")

    def _expand(self, env: _Env, names: tuple[str, ...]):
        key = (env.uid, names)
        hit = self._expansions.get(key)
        if hit is not None:
            return hit
        if self.domain is None or not self.domain.groups:
            raise EvaluationError("quantifier over an empty domain")
        m = len(names)
        tuples = []
        for g in self.domain.groups:
            g = np.asarray(g, dtype=np.int64)
            if g.size == 0:
                tuples.append(np.zeros((0, m), dtype=np.int64))
                continue
            mesh = np.meshgrid(*([g] * m), indexing="ij")
            tuples.append(np.stack([a.ravel() for a in mesh], axis=1))
        outer_idx, new_vals, new_group = [], [], []
        if env.group is None:
            per_elem = np.concatenate(tuples, axis=0)
            gid = np.concatenate([np.full(len(t), i) for i, t in enumerate(tuples)])
            s = per_elem.shape[0]
            if s == 0:
                raise EvaluationError("quantifier over an empty domain")
            outer_idx.append(np.repeat(np.arange(env.n), s))
            new_vals.append(np.tile(per_elem, (env.n, 1)))
            new_group.append(np.tile(gid, env.n))
        else:
            for gi, t in enumerate(tuples):
                elems = np.flatnonzero(env.group == gi)
                if elems.size == 0:
                    continue
                if t.shape[0] == 0:
                    raise EvaluationError("quantifier over an empty group")
                outer_idx.append(np.repeat(elems, t.shape[0]))
                new_vals.append(np.tile(t, (elems.size, 1)))
                new_group.append(np.full(elems.size * t.shape[0], gi))
        seg = np.concatenate(outer_idx).astype(np.int64)
        vals = np.concatenate(new_vals, axis=0)
        group = np.concatenate(new_group).astype(np.int64)
        binds = {k: v[seg] for k, v in env.binds.items() if k not in names}
        for j, name in enumerate(names):
            binds[name] = vals[:, j].astype(np.int64)
        inner = self._new_env(seg.size, binds, group)
        self._expansions[key] = (inner, seg)
        return inner, seg

    def _finalize(self):
        self.rows = np.asarray(self._rows, dtype=np.float64) if self._rows else np.zeros((0, 0))
        self.inputs: dict[str, np.ndarray] = {}
        self.contexts: dict[str, object] = {}
        inverse: dict[str, np.ndarray] = {}
        for pred, reqs in self._requests.items():
            allt = np.concatenate(reqs, axis=0)
            uniq, inv = np.unique(allt, axis=0, return_inverse=True)
            inverse[pred] = inv.reshape(-1)
            self.inputs[pred] = uniq
            X = np.hstack([self.rows[uniq[:, j]] for j in range(uniq.shape[1])])
            self.contexts[pred] = self.grounding.predicate_map[pred].prepare(X)
        for node in self.nodes:
            if node.op == "atom":
                off, n = node.request
                node.index = inverse[node.pred][off:off + n]
        del self._memo, self._requests

    def input_matrix(self, pred: str) -> np.ndarray:
        uniq = self.inputs[pred]
        return np.hstack([self.rows[uniq[:, j]] for j in range(uniq.shape[1])])

    # evaluation -----------------------------------------------------------

    def forward(self, mode: str = "eval", rng: np.random.Generator | None = None) -> Forward:
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        live = rng if mode == "train" else None
        pred_values, caches = {}, {}
        for pred in self.inputs:  # fixed order: first-request order
            y, cache = self.grounding.predicate_map[pred].forward(self.contexts[pred], live)
            pred_values[pred] = np.clip(y, 0.0, 1.0)
            caches[pred] = cache
        values: list[np.ndarray] = []
        for node in self.nodes:
            values.append(self._eval_node(node, values, pred_values))
        truths = np.empty(self.n_clauses)
        for root, positions in self.clause_slices:
            truths[positions] = values[root]
        sat = harmonic_mean(truths, self.eps) if self.n_clauses else float("nan")
        return Forward(values, pred_values, caches, truths, sat)

    def _eval_node(self, node: _Node, values, pred_values):
        op = node.op
        if op == "atom":
            return pred_values[node.pred][node.index]
        if op == "not":
            return lnot(values[node.children[0]])
        if op in ("and", "or", "implies"):
            a, b = values[node.children[0]], values[node.children[1]]
            return _CONNECTIVES[op](a, b)
        body = values[node.children[0]]
        if op == "forall":
            v = np.maximum(body, self.eps)
            count = np.bincount(node.index, minlength=node.n)
            return count / np.bincount(node.index, weights=1.0 / v, minlength=node.n)
        out = np.full(node.n, -np.inf)
        np.maximum.at(out, node.index, body)
        return out

    def backward(self, fw: Forward, upstream: float = 1.0) -> dict[str, dict[str, np.ndarray]]:
        """Gradients of ``upstream * satisfiability`` for each learnable predicate."""
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        t = fw.clause_truths
        active = t > self.eps
        dsat = np.where(active, fw.satisfiability**2 / (self.n_clauses * np.maximum(t, self.eps)**2), 0.0)
        dsat = dsat * upstream
        for root, positions in self.clause_slices:
            _accumulate(grads, root, dsat[positions])
        dpred = {p: np.zeros(len(v)) for p, v in fw.pred_values.items()}
        for nid in range(len(self.nodes) - 1, -1, -1):
            g = grads[nid]
            if g is None:
                continue
            node = self.nodes[nid]
            op = node.op
            if op == "atom":
                dpred[node.pred] += np.bincount(node.index, weights=g, minlength=len(dpred[node.pred]))
            elif op == "not":
                _accumulate(grads, node.children[0], -g)
            elif op in ("and", "or", "implies"):
                ia, ib = node.children
                a, b = fw.values[ia], fw.values[ib]
                if op == "and":
                    on = (a + b - 1.0) > 0.0
                    _accumulate(grads, ia, g * on)
                    _accumulate(grads, ib, g * on)
                elif op == "or":
                    on = (a + b) < 1.0
                    _accumulate(grads, ia, g * on)
                    _accumulate(grads, ib, g * on)
                else:
                    on = (1.0 - a + b) < 1.0
                    _accumulate(grads, ia, -g * on)
                    _accumulate(grads, ib, g * on)
            elif op == "forall":
                body = fw.values[node.children[0]]
                out = fw.values[nid]
                count = np.bincount(node.index, minlength=node.n)
                seg = node.index
                local = np.where(body > self.eps,
                                 out[seg] ** 2 / (count[seg] * np.maximum(body, self.eps) ** 2), 0.0)
                _accumulate(grads, node.children[0], g[seg] * local)
            else:
                body = fw.values[node.children[0]]
                out = fw.values[nid]
                winners = np.flatnonzero(body == out[node.index])
                _, first = np.unique(node.index[winners], return_index=True)
                pick = winners[first]
                local = np.zeros_like(body)
                local[pick] = g[node.index[pick]]
                _accumulate(grads, node.children[0], local)
        result = {}
        for pred, dy in dpred.items():
            handle = self.grounding.predicate_map[pred]
            if handle.learnable():
                result[pred] = handle.backward(fw.caches[pred], dy)
        return result


def _accumulate(grads, nid, g):
    if grads[nid] is None:
        grads[nid] = np.array(g, dtype=np.float64, copy=True)
    else:
        grads[nid] += g


def _template_batches(clauses: Sequence[Formula]):
    """Group clauses that differ only in their constants.

    Returns ``(template, [constant tuple per clause], [clause positions])``
    with constants replaced by slot variables ``$0, $1, ...`` numbered by
    first occurrence.
    """
    groups: dict[str, list] = {}
    for pos, clause in enumerate(clauses):
        slots: dict[str, str] = {}
        template = _abstract(clause, slots)
        key = print_formula(template)
        entry = groups.get(key)
        if entry is None:
            entry = groups[key] = [template, [], []]
        entry[1].append(tuple(slots))
        entry[2].append(pos)
    return [tuple(v) for v in groups.values()]


def _abstract(f, slots: dict[str, str]):
    def term(t):
        if isinstance(t, Constant):
            if t.symbol not in slots:
                slots[t.symbol] = f"${len(slots)}"
            return Variable(slots[t.symbol])
        if isinstance(t, Apply):
            return Apply(t.function, tuple(term(a) for a in t.args))
        return t

    if isinstance(f, Atom):
        return Atom(f.predicate, tuple(term(t) for t in f.terms))
    if isinstance(f, Not):
        return Not(_abstract(f.body, slots))
    if isinstance(f, (And, Or, Implies)):
        left = _abstract(f.left, slots)
        return type(f)(left, _abstract(f.right, slots))
    return type(f)(f.vars, _abstract(f.body, slots))


# -- public evaluation API -------------------------------------------------

def eval_formula(f: Formula, g: Grounding, domain=None, mode: str = "eval",
                 rng: np.random.Generator | None = None) -> float:
    """Truth value of a closed formula under ``g``.

    ``domain`` is the quantification domain: a list of vectors, a 2-D
    array, a list of 2-D arrays (groups) or a :class:`Domain`.
    """
    prog = Program([f], g, domain, group_templates=False)
    return float(prog.forward(mode, rng).clause_truths[0])


def satisfiability(theory: GroundedTheory, domain=None, mode: str = "eval",
                   rng: np.random.Generator | None = None) -> float:
    """Harmonic mean of the clause truths (each floored at ``EPS``)."""
    if not theory.clauses:
        raise EvaluationError("theory has no clauses")
    return Program(theory.clauses, theory.grounding, domain).forward(mode, rng).satisfiability


# -- mereology -------------------------------------------------------------

def mereology_constraints(table: PartWholeTable, sig: Signature,
                          part_of: str = "partOf") -> list[Formula]:
    """Part-whole axioms over the unary class predicates of ``sig``.

    Emits, in order: asymmetry of ``part_of``; for every part class and every
    whole class it cannot belong to, that the pair is never in ``part_of``;
    wholes are never parts of wholes; parts never have parts.
    """
    classes = sig.unary
    if len(classes) != table.n_classes:
        raise ValueError(f"table covers {table.n_classes} classes, signature has {len(classes)}")
    x, y = Variable("x"), Variable("y")
    po = lambda a, b: Atom(part_of, (a, b))  # noqa: E731
    cls = lambda i, v: Atom(classes[i], (v,))  # noqa: E731
    out: list[Formula] = [ForAll(("x", "y"), Implies(po(x, y), Not(po(y, x))))]
    for p in table.parts:
        for w in table.wholes:
            if table.w[p, w] == 0:
                out.append(ForAll(("x", "y"), Implies(And(cls(p, x), cls(w, y)), Not(po(x, y)))))
    for w1 in table.wholes:
        for w2 in table.wholes:
            out.append(ForAll(("x", "y"), Implies(And(cls(w1, x), cls(w2, y)), Not(po(x, y)))))
    for p1 in table.parts:
        for p2 in table.parts:
            out.append(ForAll(("x", "y"), Implies(And(cls(p1, x), cls(p2, y)), Not(po(y, x)))))
    return out


def mereology_count(table: PartWholeTable) -> int:
    """Closed-form number of clauses :func:`mereology_constraints` emits."""
    incompatible = sum(1 for p in table.parts for w in table.wholes if table.w[p, w] == 0)
    return 1 + incompatible + len(table.wholes) ** 2 + len(table.parts) ** 2


def clauses_text(clauses: Iterable[Formula]) -> str:
    return "".join(print_formula(c) + "\n" for c in clauses)
