"""Fischer-Ladner closure, Hintikka atoms, deferrals, and atom coherence.

Atoms are represented as plain int bitmasks over the closure's formula
indices throughout the package; this module owns the conversions.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property

from .syntax import (
    Bottom, Dia, Neg, Or, Sharp, Var, box, disjunctive_form,
    free_vars, subformulas, substitute, to_string,
    DAnd, DFree, DNabla, DOr, DX,
)


class ClosureSet:
    """Finite formula set closed under subformulas, single negation, and
    fixpoint unfolding, always containing [F]_|_ and [B]_|_."""

    def __init__(self, formulas, origin):
        self.formulas = tuple(formulas)
        self.origin = origin
        self.index = {f: i for i, f in enumerate(self.formulas)}

    def __len__(self):
        return len(self.formulas)

    def __contains__(self, f):
        return f in self.index

    def __iter__(self):
        return iter(self.formulas)

    def index_of(self, f):
        return self.index[f]

    @cached_property
    def negation_map(self):
        """index -> index of the Hintikka complement (~ strips one Neg)."""
        out = {}
        for i, f in enumerate(self.formulas):
            g = f.child if isinstance(f, Neg) else Neg(f)
            out[i] = self.index[g]
        return out

    @cached_property
    def dia_pairs(self):
        """direction -> list of (index of <d>rho, index of rho), index order."""
        out = {'F': [], 'B': []}
        for i, f in enumerate(self.formulas):
            if isinstance(f, Dia):
                out[f.direction].append((i, self.index[f.child]))
        return out

    @cached_property
    def sharp_indices(self):
        return tuple(i for i, f in enumerate(self.formulas) if isinstance(f, Sharp))

    @cached_property
    def sharp_unfoldings(self):
        """sharp index -> (index of chi(sharp, args), index of chi(_|_, args))."""
        out = {}
        for i in self.sharp_indices:
            f = self.formulas[i]
            unfold = f.connective.instantiate(f, f.args)
            bottomed = f.connective.instantiate(Bottom(), f.args)
            out[i] = (self.index[unfold], self.index[bottomed])
        return out

    @cached_property
    def var_names(self):
        return tuple(sorted({f.name for f in self.formulas if isinstance(f, Var)}))

    @cached_property
    def box_bottom_index(self):
        return {'F': self.index[box('F', Bottom())],
                'B': self.index[box('B', Bottom())]}


def _children(f):
    if isinstance(f, Neg):
        return [f.child]
    if isinstance(f, Or):
        return [f.left, f.right]
    if isinstance(f, Dia):
        return [f.child]
    if isinstance(f, Sharp):
        out = list(f.args)
        out.append(f.connective.instantiate(f, f.args))
        out.append(f.connective.instantiate(Bottom(), f.args))
        return out
    return []


def fl_closure(origin) -> ClosureSet:
    """Smallest closed set containing the origin, [F]_|_ and [B]_|_.

    Worklist breadth-first walk; the unfoldings of a # formula are added
    once (structural dedup), which bounds the closure size.
    """
    seeds = [origin, box('F', Bottom()), box('B', Bottom())]
    seen = {}
    queue = deque()
    for f in seeds:
        if f not in seen:
            seen[f] = len(seen)
            queue.append(f)
    while queue:
        f = queue.popleft()
        todo = _children(f)
        if not isinstance(f, Neg):
            todo.append(Neg(f))
        for g in todo:
            if g not in seen:
                seen[g] = len(seen)
                queue.append(g)
    formulas = sorted(seen, key=seen.get)
    return ClosureSet(formulas, origin)


# ---------------------------------------------------------------------------
# atoms

def atom_bits(sigma: ClosureSet, formulas) -> int:
    bits = 0
    for f in formulas:
        bits |= 1 << sigma.index_of(f)
    return bits


def atom_formulas(sigma: ClosureSet, bits: int):
    return [f for i, f in enumerate(sigma.formulas) if bits >> i & 1]


def is_atom(members, sigma: ClosureSet) -> bool:
    """Hintikka conditions: no bottom, or-coherent, negation-complete,
    and every # formula agrees with its unfolding."""
    if isinstance(members, int):
        bits = members
    else:
        bits = atom_bits(sigma, members)
    if bits >> len(sigma) != 0:
        raise ValueError('bitset uses indices outside the closure')
    for i, f in enumerate(sigma.formulas):
        have = bits >> i & 1
        if isinstance(f, Bottom) and have:
            return False
        if isinstance(f, Or):
            l = bits >> sigma.index_of(f.left) & 1
            r = bits >> sigma.index_of(f.right) & 1
            if have != (l | r):
                return False
        if have == (bits >> sigma.negation_map[i] & 1):
            return False
    for i, (unfold_i, _) in sigma.sharp_unfoldings.items():
        if (bits >> i & 1) != (bits >> unfold_i & 1):
            return False
    return True


def enumerate_atoms(sigma: ClosureSet):
    """All atoms over sigma, ascending as bitset integers.

    Bits for variables, diamonds and # formulas are free choices; boolean
    structure determines the rest; # choices are filtered against their
    unfoldings afterwards.
    """
    base = [i for i, f in enumerate(sigma.formulas)
            if isinstance(f, (Var, Dia, Sharp))]

    def value(f, chosen):
        if isinstance(f, Bottom):
            return 0
        i = sigma.index_of(f)
        if i in chosen:
            return chosen[i]
        if isinstance(f, Neg):
            return 1 - value(f.child, chosen)
        if isinstance(f, Or):
            return value(f.left, chosen) | value(f.right, chosen)
        raise AssertionError(f)

    out = []
    for mask in range(1 << len(base)):
        chosen = {i: mask >> k & 1 for k, i in enumerate(base)}
        bits = 0
        for i, f in enumerate(sigma.formulas):
            bits |= value(f, chosen) << i
        ok = True
        for i, (unfold_i, _) in sigma.sharp_unfoldings.items():
            if (bits >> i & 1) != (bits >> unfold_i & 1):
                ok = False
                break
        if ok:
            out.append(bits)
    out.sort()
    return out


def coherent(a_bits: int, b_bits: int, sigma: ClosureSet) -> bool:
    """May an edge run from a node labeled A to one labeled B?

    Diamond formulation: rho in B forces <F>rho in A, and rho in A forces
    <B>rho in B. By negation completeness of atoms this is the same as
    propagating box members across the edge.
    """
    for dia_i, child_i in sigma.dia_pairs['F']:
        if b_bits >> child_i & 1 and not a_bits >> dia_i & 1:
            return False
    for dia_i, child_i in sigma.dia_pairs['B']:
        if a_bits >> child_i & 1 and not b_bits >> dia_i & 1:
            return False
    return True


# ---------------------------------------------------------------------------
# deferrals

@dataclass(frozen=True)
class Deferral:
    """One x-containing position of a host's body, with its instantiation."""
    host: object          # the Sharp formula in the closure
    body_part: object     # source subformula of the connective body
    instantiation: object # body_part[x -> host, q -> args]
    dnode: object         # grammar position (None when the body is not disjunctive)


class DeferralTable:
    """Indexed deferrals of a closure, host-major then body preorder.

    d counts the deferrals. Saturation always wants at least one witness
    per diamond, so the multiplicity used by network operations is
    max(1, d); keep the two apart.
    """

    def __init__(self, sigma: ClosureSet):
        self.sigma = sigma
        deferrals = []
        by_host = {}
        pos_inst = {}     # (host, src) -> closure index, all grammar positions
        bottom_inst = {}  # host -> closure index of chi(_|_, args)
        for i in sigma.sharp_indices:
            host = sigma.formulas[i]
            chi = host.connective
            mapping = {'x': host}
            for k, a in enumerate(host.args):
                mapping['q%d' % (k + 1)] = a
            bottom_inst[host] = sigma.index_of(
                chi.instantiate(Bottom(), host.args))
            df = disjunctive_form(chi)
            slots = {}
            if df is not None:
                for node in _dform_walk(df[1]):
                    inst = substitute(node.src, mapping)
                    pos_inst[(host, node.src)] = sigma.index_of(inst)
                    if not isinstance(node, DFree) and node.src not in slots:
                        slots[node.src] = node
            else:
                for part in subformulas(chi.body):
                    if 'x' in free_vars(part):
                        pos_inst[(host, part)] = sigma.index_of(
                            substitute(part, mapping))
                        if part not in slots:
                            slots[part] = None
            by_host[host] = {}
            for src, node in slots.items():
                by_host[host][src] = len(deferrals)
                deferrals.append(Deferral(
                    host, src, substitute(src, mapping), node))
        self.deferrals = tuple(deferrals)
        self.by_host = by_host
        self.pos_inst = pos_inst
        self.bottom_inst = bottom_inst
        self.d = len(deferrals)

    @property
    def multiplicity(self) -> int:
        return max(1, self.d)

    def __len__(self):
        return len(self.deferrals)

    def index_of(self, host, body_part) -> int:
        return self.by_host[host][body_part]

    def inst_index(self, did: int) -> int:
        dfl = self.deferrals[did]
        return self.pos_inst[(dfl.host, dfl.body_part)]

    def direction(self, did: int):
        """Direction of the host's disjunctive form, or None."""
        df = disjunctive_form(self.deferrals[did].host.connective)
        return None if df is None else df[0]

    def describe(self, did: int) -> str:
        dfl = self.deferrals[did]
        return '%d: %s at %s' % (did, to_string(dfl.body_part),
                                 to_string(dfl.host))


def _dform_walk(node):
    yield node
    if isinstance(node, DOr):
        yield from _dform_walk(node.left)
        yield from _dform_walk(node.right)
    elif isinstance(node, DAnd):
        yield from _dform_walk(node.child)
    elif isinstance(node, DNabla):
        for c in node.components:
            yield from _dform_walk(c)


def deferral_table(sigma: ClosureSet) -> DeferralTable:
    return DeferralTable(sigma)
