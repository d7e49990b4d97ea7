"""Exact probability tables over small finite alphabets.

Dense float64 throughout: PMFs, row-stochastic kernels, and joint tables
keyed by variable names, plus entropies and mutual informations in bits.
Alphabets here are tiny (at most a few hundred cells), so everything is
computed exactly from the full table; nothing in this module samples.

Conventions: 0*log(0) = 0, and conditional terms whose conditioning event
has zero mass contribute 0. Distributions that do not sum to one within
``MASS_TOL`` are rejected rather than silently renormalized.

All values are immutable after construction and all operations are pure,
so they can be shared freely across worker processes or threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MASS_TOL = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Alphabet:
    """A finite symbol set of a given size, optionally with display labels."""

    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"alphabet size must be >= 1, got {self.size}")
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != self.size:
                raise ValueError(
                    f"{len(labels)} labels for alphabet of size {self.size}"
                )
            if len(set(labels)) != len(labels):
                raise ValueError("alphabet labels must be unique")
            object.__setattr__(self, "labels", labels)

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels is not None else str(i)


@dataclass(frozen=True)
class Pmf:
    """A probability vector: nonnegative entries summing to one."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1:
            raise ValueError("Pmf expects a 1-D vector")
        if np.any(p < 0):
            raise ValueError("Pmf has negative entries")
        s = float(p.sum())
        if abs(s - 1.0) > MASS_TOL:
            raise ValueError(f"Pmf sums to {s!r}, expected 1 within {MASS_TOL}")
        object.__setattr__(self, "probs", _freeze(p))

    @property
    def size(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class CondPmf:
    """A row-stochastic kernel: one Pmf per conditioning symbol.

    The conditioning alphabet may be a Cartesian product; rows are then
    ordered row-major in the product indices (first factor varies slowest).
    """

    rows: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rows, dtype=float)
        if r.ndim != 2:
            raise ValueError("CondPmf expects a 2-D row matrix")
        if np.any(r < 0):
            raise ValueError("CondPmf has negative entries")
        sums = r.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > MASS_TOL)[0]
        if bad.size:
            i = int(bad[0])
            raise ValueError(
                f"CondPmf row {i} sums to {sums[i]!r}, expected 1 within {MASS_TOL}"
            )
        object.__setattr__(self, "rows", _freeze(r))

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_cols(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class JointTable:
    """A joint distribution over an ordered tuple of named variables."""

    vars: tuple[tuple[str, Alphabet], ...]
    values: np.ndarray

    def __post_init__(self):
        vars_ = tuple((str(n), a) for n, a in self.vars)
        names = [n for n, _ in vars_]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        v = np.asarray(self.values, dtype=float)
        shape = tuple(a.size for _, a in vars_)
        if v.shape != shape:
            raise ValueError(f"values shape {v.shape} does not match alphabets {shape}")
        if np.any(v < 0):
            raise ValueError("joint table has negative entries")
        mass = float(v.sum())
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"joint table mass {mass!r}, expected 1 within {MASS_TOL}")
        object.__setattr__(self, "vars", vars_)
        object.__setattr__(self, "values", _freeze(v))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.vars)

    def axis(self, name: str) -> int:
        for i, (n, _) in enumerate(self.vars):
            if n == name:
                return i
        raise ValueError(f"unknown variable {name!r}; table has {self.names}")


def _as_names(group) -> tuple[str, ...]:
    if isinstance(group, str):
        return (group,)
    return tuple(group)


def _check_groups(j: JointTable, *groups: Iterable[str]) -> list[tuple[str, ...]]:
    out = []
    seen: set[str] = set()
    for g in groups:
        names = _as_names(g)
        for n in names:
            j.axis(n)  # raises on unknown
            if n in seen:
                raise ValueError(f"variable {n!r} appears in more than one group")
            seen.add(n)
        out.append(names)
    return out


def _entropy_bits(values: np.ndarray) -> float:
    p = np.asarray(values, dtype=float).ravel()
    nz = p > 0
    return float(-(p[nz] * np.log2(p[nz])).sum())


def entropy(p) -> float:
    """Shannon entropy in bits; accepts a Pmf or a raw probability vector."""
    if not isinstance(p, Pmf):
        p = Pmf(np.asarray(p, dtype=float))
    return _entropy_bits(p.probs)


def marginalize(j: JointTable, keep) -> JointTable:
    """Sum out every variable not in ``keep``; result preserves table order."""
    keep_names = set(_as_names(keep))
    for n in keep_names:
        j.axis(n)
    drop_axes = tuple(i for i, (n, _) in enumerate(j.vars) if n not in keep_names)
    vals = j.values.sum(axis=drop_axes) if drop_axes else j.values
    vars_ = tuple((n, a) for n, a in j.vars if n in keep_names)
    return JointTable(vars_, vals)


def _marginal_values(j: JointTable, names: Sequence[str]) -> np.ndarray:
    keep = set(names)
    drop_axes = tuple(i for i, (n, _) in enumerate(j.vars) if n not in keep)
    return j.values.sum(axis=drop_axes) if drop_axes else j.values


def mutual_information(j: JointTable, group_a, group_b, given=()) -> float:
    """Conditional mutual information I(A;B|C) in bits.

    Computed from joint entropies, I = H(AC) + H(BC) - H(ABC) - H(C),
    which makes the symmetry in A and B explicit. Tiny negative rounding
    residue is clamped to zero.
    """
    a, b, c = _check_groups(j, group_a, group_b, given)
    if not a or not b:
        raise ValueError("both variable groups must be nonempty")
    h_ac = _entropy_bits(_marginal_values(j, a + c))
    h_bc = _entropy_bits(_marginal_values(j, b + c))
    h_abc = _entropy_bits(_marginal_values(j, a + b + c))
    h_c = _entropy_bits(_marginal_values(j, c)) if c else 0.0
    return max(0.0, h_ac + h_bc - h_abc - h_c)


def check_markov(j: JointTable, chain, tol: float = 1e-10) -> tuple[bool, float]:
    """Test whether A - B - C is a Markov chain under ``j``.

    ``chain`` is a triple of disjoint name groups (A, B, C). Returns
    ``(holds, max_violation)`` where the violation at a cell is
    |P(a,b,c) - P(a|b) P(c|b) P(b)|; cells whose conditioning mass P(b)
    is zero contribute nothing.
    """
    if len(chain) != 3:
        raise ValueError("chain must be a triple of name groups")
    a, b, c = _check_groups(j, *chain)
    # Reduce to a table over (A, B, C) with axes grouped in that order.
    sub = marginalize(j, a + b + c)
    order = [sub.axis(n) for n in a + b + c]
    vals = np.transpose(sub.values, order)
    na = int(np.prod([sub.vars[i][1].size for i in order[: len(a)]]))
    nb = int(np.prod([sub.vars[i][1].size for i in order[len(a) : len(a) + len(b)]]))
    nc = int(np.prod([sub.vars[i][1].size for i in order[len(a) + len(b) :]]))
    p_abc = vals.reshape(na, nb, nc)
    p_b = p_abc.sum(axis=(0, 2))
    p_ab = p_abc.sum(axis=2)
    p_cb = p_abc.sum(axis=0)
    nzb = p_b > 0
    predicted = np.zeros_like(p_abc)
    predicted[:, nzb, :] = (
        p_ab[:, nzb][:, :, None] * p_cb[nzb, :][None, :, :] / p_b[nzb][None, :, None]
    )
    viol = np.abs(p_abc - predicted)
    viol[:, ~nzb, :] = 0.0
    max_violation = float(viol.max()) if viol.size else 0.0
    return max_violation <= tol, max_violation
