"""Hilbert-space layout and (possibly time-dependent) operator algebra.

Operators are linear combinations of fixed sparse matrices with scalar
coefficients.  A coefficient is a constant times a product of user callables,
each optionally conjugated, so products and adjoints stay symbolic and a
Liouvillian can later be split into a few constant superoperators weighted by
scalar functions of time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

# emitter basis order
UP, DOWN, TRION_UP, TRION_DOWN = 0, 1, 2, 3
EMITTER_LABELS = ("up", "down", "trion_up", "trion_down")


class Coef:
    """Scalar coefficient ``const * prod(f(t) or conj(f(t)))``."""

    __slots__ = ("const", "factors")

    def __init__(self, const: complex = 1.0, factors: tuple = ()):
        self.const = complex(const)
        # factors: tuple of (callable, conjugated) sorted for stable grouping
        self.factors = tuple(sorted(factors, key=lambda f: (id(f[0]), f[1])))

    @classmethod
    def of(cls, value) -> "Coef":
        if isinstance(value, Coef):
            return value
        if callable(value):
            return cls(1.0, ((value, False),))
        return cls(value)

    @property
    def constant(self) -> bool:
        return not self.factors

    @property
    def key(self) -> tuple:
        return tuple((id(f), c) for f, c in self.factors)

    def __mul__(self, other) -> "Coef":
        other = Coef.of(other)
        return Coef(self.const * other.const, self.factors + other.factors)

    __rmul__ = __mul__

    def conj(self) -> "Coef":
        return Coef(np.conj(self.const), tuple((f, not c) for f, c in self.factors))

    def time_part(self, t: float) -> complex:
        val = 1.0 + 0j
        for f, c in self.factors:
            v = complex(f(t))
            val *= v.conjugate() if c else v
        return val

    def __call__(self, t: float) -> complex:
        return self.const * self.time_part(t)


@dataclass(frozen=True, eq=False)
class Term:
    coef: Coef
    mat: sp.csr_matrix
    source_degree: int = 0  # number of source-mode factors, used for efficiency scaling


class Op:
    """Linear combination of terms on a common space."""

    def __init__(self, terms=(), dim: int | None = None):
        self.terms: list[Term] = list(terms)
        if dim is None:
            if not self.terms:
                raise ValueError("empty operator needs an explicit dimension")
            dim = self.terms[0].mat.shape[0]
        self.dim = dim

    @classmethod
    def from_matrix(cls, mat, coef=1.0, source_degree: int = 0) -> "Op":
        m = sp.csr_matrix(mat, dtype=complex)
        return cls([Term(Coef.of(coef), m, source_degree)], m.shape[0])

    @classmethod
    def zero(cls, dim: int) -> "Op":
        return cls([], dim)

    def _check(self, other: "Op"):
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "Op") -> "Op":
        self._check(other)
        return Op(self.terms + other.terms, self.dim)

    def __sub__(self, other: "Op") -> "Op":
        return self + (-1.0) * other

    def __mul__(self, scalar) -> "Op":
        c = Coef.of(scalar)
        return Op([Term(t.coef * c, t.mat, t.source_degree) for t in self.terms], self.dim)

    __rmul__ = __mul__

    def __matmul__(self, other: "Op") -> "Op":
        self._check(other)
        terms = [Term(a.coef * b.coef, (a.mat @ b.mat).tocsr(), a.source_degree + b.source_degree)
                 for a in self.terms for b in other.terms]
        return Op(terms, self.dim)

    def dag(self) -> "Op":
        return Op([Term(t.coef.conj(), t.mat.conj().T.tocsr(), t.source_degree) for t in self.terms], self.dim)

    def scale_by_degree(self, factor: float) -> "Op":
        """Multiply every term by factor**source_degree."""
        return Op([Term(t.coef * (factor ** t.source_degree), t.mat, t.source_degree)
                   for t in self.terms if factor ** t.source_degree != 0 or t.source_degree == 0],
                  self.dim)

    def source_part(self) -> "Op":
        return Op([t for t in self.terms if t.source_degree > 0], self.dim)

    @property
    def constant(self) -> bool:
        return all(t.coef.constant for t in self.terms)

    def simplify(self) -> "Op":
        """Merge terms sharing a time dependence and drop numerically zero ones."""
        groups: dict[tuple, Term] = {}
        order = []
        for t in self.terms:
            key = (t.coef.key, t.source_degree)
            if key in groups:
                g = groups[key]
                groups[key] = Term(Coef(1.0, g.coef.factors), g.coef.const * g.mat + t.coef.const * t.mat,
                                   t.source_degree)
            else:
                groups[key] = Term(Coef(1.0, t.coef.factors), t.coef.const * t.mat, t.source_degree)
                order.append(key)
        terms = []
        for k in order:
            m = groups[k].mat.tocsr()
            m.eliminate_zeros()
            if m.nnz and abs(m).max() > 0:
                terms.append(Term(groups[k].coef, m, groups[k].source_degree))
        return Op(terms, self.dim)

    def at(self, t: float = 0.0) -> sp.csr_matrix:
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for term in self.terms:
            out = out + term.coef(t) * term.mat
        return out.tocsr()

    def dense(self, t: float = 0.0) -> np.ndarray:
        return self.at(t).toarray()


@dataclass(frozen=True)
class HilbertLayout:
    """Emitter (4 levels) tensor two source modes (R, L) with cutoffs ``fock_r``, ``fock_l``.

    A cutoff N keeps Fock levels 0..N-1.  A mode that is never populated may be
    given a cutoff of 1.
    """

    fock_r: int = 3
    fock_l: int = 3
    emitter_dim: int = 4

    def __post_init__(self):
        if self.fock_r < 1 or self.fock_l < 1:
            raise ValueError("Fock cutoffs must be at least 1")
        if self.emitter_dim != 4:
            raise ValueError("the emitter has exactly four levels")

    @classmethod
    def uniform(cls, n: int) -> "HilbertLayout":
        return cls(n, n)

    @property
    def dim(self) -> int:
        return self.emitter_dim * self.fock_r * self.fock_l

    def _embed(self, e, r, l) -> sp.csr_matrix:
        return sp.kron(sp.kron(e, r), l, format="csr").astype(complex)

    def emitter(self, mat) -> sp.csr_matrix:
        return self._embed(sp.csr_matrix(mat), sp.identity(self.fock_r), sp.identity(self.fock_l))

    @staticmethod
    def _destroy(n: int) -> sp.csr_matrix:
        return sp.diags(np.sqrt(np.arange(1, n)), 1, shape=(n, n), format="csr")

    @property
    def a_r(self) -> sp.csr_matrix:
        return self._embed(sp.identity(4), self._destroy(self.fock_r), sp.identity(self.fock_l))

    @property
    def a_l(self) -> sp.csr_matrix:
        return self._embed(sp.identity(4), sp.identity(self.fock_r), self._destroy(self.fock_l))

    def transition(self, lower: int, upper: int) -> sp.csr_matrix:
        m = np.zeros((4, 4))
        m[lower, upper] = 1.0
        return self.emitter(m)

    @property
    def sigma_r(self) -> sp.csr_matrix:
        return self.transition(UP, TRION_UP)

    @property
    def sigma_l(self) -> sp.csr_matrix:
        return self.transition(DOWN, TRION_DOWN)

    def projector(self, level: int) -> sp.csr_matrix:
        return self.transition(level, level)

    @property
    def identity(self) -> sp.csr_matrix:
        return sp.identity(self.dim, dtype=complex, format="csr")

    def top_level_projectors(self) -> list[sp.csr_matrix]:
        out = []
        for n, which in ((self.fock_r, "r"), (self.fock_l, "l")):
            if n < 2:
                continue
            p = np.zeros((n, n))
            p[-1, -1] = 1.0
            if which == "r":
                out.append(self._embed(sp.identity(4), sp.csr_matrix(p), sp.identity(self.fock_l)))
            else:
                out.append(self._embed(sp.identity(4), sp.identity(self.fock_r), sp.csr_matrix(p)))
        return out

    def product_state(self, emitter_vec, r_vec, l_vec) -> np.ndarray:
        return np.kron(np.kron(np.asarray(emitter_vec, complex), np.asarray(r_vec, complex)),
                       np.asarray(l_vec, complex))

    def emitter_block(self, rho: np.ndarray) -> np.ndarray:
        """Partial trace over both source modes."""
        m = self.fock_r * self.fock_l
        r = rho.reshape(4, m, 4, m)
        return np.einsum("iaja->ij", r)
