"""Assembly of (conditional) Lindblad generators as sparse superoperators.

Density matrices are vectorised row-major, so vec(A rho B) = (A kron B^T) vec(rho).
A time-dependent generator is stored as a handful of constant superoperators,
each multiplied by a scalar function of time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..params import ImperfectionParams
from .operators import Coef, HilbertLayout, Op
from .triple import SLHTriple


@dataclass(frozen=True, eq=False)
class Liouvillian:
    parts: tuple  # (Coef with const == 1, sparse superoperator)
    dim: int
    trace_preserving: bool = True

    @property
    def constant(self) -> bool:
        return all(c.constant for c, _ in self.parts)

    def matrix(self, t: float = 0.0) -> sp.csr_matrix:
        n = self.dim**2
        out = sp.csr_matrix((n, n), dtype=complex)
        for c, m in self.parts:
            out = out + c.time_part(t) * m
        return out.tocsr()

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        out = None
        for c, m in self.parts:
            v = m @ y
            if not c.constant:
                v = c.time_part(t) * v
            out = v if out is None else out + v
        return out if out is not None else np.zeros_like(y)

    def apply(self, rho: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self(t, rho.reshape(-1)).reshape(self.dim, self.dim)


class _Accumulator:
    def __init__(self, dim: int):
        self.dim = dim
        self.eye = sp.identity(dim, dtype=complex, format="csr")
        self.groups: dict[tuple, list] = {}

    def add(self, coef: Coef, superop: sp.spmatrix):
        key = coef.key
        if key in self.groups:
            self.groups[key][1] = self.groups[key][1] + coef.const * superop
        else:
            self.groups[key] = [Coef(1.0, coef.factors), coef.const * superop]

    def hamiltonian(self, H: Op):
        for t in H.terms:
            h = t.mat
            self.add(t.coef, -1j * sp.kron(h, self.eye) + 1j * sp.kron(self.eye, h.T))

    def jump(self, L: Op, sign: float = 1.0):
        for a in L.terms:
            for b in L.terms:
                self.add(a.coef * b.coef.conj() * sign, sp.kron(a.mat, b.mat.conj()))

    def damping(self, L: Op):
        for a in L.terms:
            for b in L.terms:
                prod = (b.mat.conj().T @ a.mat).tocsr()
                self.add(a.coef * b.coef.conj() * -0.5,
                         sp.kron(prod, self.eye) + sp.kron(self.eye, prod.T))

    def build(self, trace_preserving: bool) -> Liouvillian:
        parts = []
        for coef, m in self.groups.values():
            m = m.tocsr()
            m.eliminate_zeros()
            if m.nnz:
                parts.append((coef, m))
        # constant part first keeps evaluation order fixed
        parts.sort(key=lambda p: len(p[0].factors))
        return Liouvillian(tuple(parts), self.dim, trace_preserving)


def apply_efficiency(G: SLHTriple, eta: float) -> tuple[SLHTriple, list[Op]]:
    """Scale source-mode terms by sqrt(eta) and return the complementary loss channels.

    Each channel's source part S_k is split into sqrt(eta) S_k, which stays in
    the monitored channel and couples to the emitter, and sqrt(1 - eta) S_k,
    an unmonitored loss channel, so the source itself still empties at its full rate.
    """
    if eta == 1.0:
        return G, []
    s = np.sqrt(eta)
    L = tuple(op.scale_by_degree(s).simplify() for op in G.L)
    H = G.H.scale_by_degree(s).simplify()
    losses = []
    if eta < 1.0:
        for op in G.L:
            src = op.source_part()
            if src.terms:
                losses.append((np.sqrt(1.0 - eta) * src).simplify())
    return SLHTriple(L, H), losses


def dephasing_channels(layout: HilbertLayout, gamma_star: float) -> list[Op]:
    if gamma_star <= 0:
        return []
    g = np.sqrt(gamma_star)
    return [Op.from_matrix(layout.projector(2), g), Op.from_matrix(layout.projector(3), g)]


def assemble_generator(G: SLHTriple, imp: ImperfectionParams | None = None, *,
                       layout: HilbertLayout | None = None,
                       extra_channels=(), subtract_jumps=()) -> Liouvillian:
    """Lindblad generator of ``G`` with dephasing and efficiency, optionally minus jump terms.

    L rho = -i[H, rho] + sum_k D(L_k) rho + gamma_* (D(P_up*) + D(P_down*)) rho - sum_j J(d_j) rho
    """
    imp = ImperfectionParams() if imp is None else imp
    G, losses = apply_efficiency(G, imp.eta)
    acc = _Accumulator(G.dim)
    acc.hamiltonian(G.H)
    channels = list(G.L) + losses + list(extra_channels)
    if imp.gamma_star > 0:
        if layout is None:
            raise ValueError("dephasing needs the Hilbert layout")
        channels += dephasing_channels(layout, imp.gamma_star)
    for c in channels:
        acc.jump(c)
        acc.damping(c)
    for d in subtract_jumps:
        acc.jump(d, sign=-1.0)
    return acc.build(trace_preserving=not subtract_jumps)


def expectation_vector(op: sp.spmatrix) -> sp.csr_matrix:
    """Row vector w with Tr(op rho) = w @ vec(rho) for row-major vec."""
    return sp.csr_matrix(op.T.reshape(1, -1))
