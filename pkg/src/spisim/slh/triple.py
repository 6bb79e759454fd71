"""SLH triples for the virtual source, the four-level emitter and their cascade."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from ..analytic import PhotonEnvelope
from ..params import ProbeState
from .operators import DOWN, UP, HilbertLayout, Op

GAMMA_MAX_FACTOR = 1e3
REMAINING_NORM_FLOOR = 1e-9
COHERENT_TAIL = 1e-7


@dataclass(frozen=True, eq=False)
class SLHTriple:
    """(S, L, H) with S the identity on ``len(L)`` channels."""

    L: tuple
    H: Op
    S: np.ndarray = field(default=None)

    def __post_init__(self):
        L = tuple(self.L)
        object.__setattr__(self, "L", L)
        if self.S is None:
            object.__setattr__(self, "S", np.eye(len(L)))
        s = np.asarray(self.S)
        if s.shape != (len(L), len(L)) or not np.allclose(s.conj().T @ s, np.eye(len(L)), atol=1e-12):
            raise ValueError("scattering matrix must be unitary with one row per channel")
        dims = {op.dim for op in L} | {self.H.dim}
        if len(dims) != 1:
            raise ValueError("all operators must act on the same space")
        if self.hermiticity_error() > 1e-12:
            raise ValueError("Hamiltonian is not Hermitian")

    @property
    def channels(self) -> int:
        return len(self.L)

    @property
    def dim(self) -> int:
        return self.H.dim

    def hermiticity_error(self, t: float = 0.0) -> float:
        h = self.H.at(t)
        d = h - h.conj().T
        return float(abs(d).max()) if d.nnz else 0.0


def series_product(downstream: SLHTriple, upstream: SLHTriple) -> SLHTriple:
    """Cascade ``upstream`` into ``downstream`` (identity scattering matrices only).

    L = L_down + L_up,  H = H_down + H_up + (1/2i) sum_k (L_down,k^dag L_up,k - L_up,k^dag L_down,k)
    """
    if downstream.channels != upstream.channels:
        raise ValueError(f"channel mismatch: {downstream.channels} vs {upstream.channels}")
    for t in (downstream, upstream):
        if not np.allclose(t.S, np.eye(t.channels)):
            raise ValueError("only identity scattering matrices are supported")
    L = tuple((ld + lu).simplify() for ld, lu in zip(downstream.L, upstream.L))
    H = downstream.H + upstream.H
    for ld, lu in zip(downstream.L, upstream.L):
        H = H + (-0.5j) * (ld.dag() @ lu - lu.dag() @ ld)
    return SLHTriple(L, H.simplify())


def emitter_triple(layout: HilbertLayout, gamma: float = 1.0) -> SLHTriple:
    """Four-level emitter with circularly polarised transitions, resonant frame."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    g = math.sqrt(gamma)
    L = (Op.from_matrix(layout.sigma_r, g), Op.from_matrix(layout.sigma_l, g))
    return SLHTriple(L, Op.zero(layout.dim))


# --------------------------------------------------------------------------
# pulse shaping


class ShapedCoupling:
    """Time-dependent source coupling sqrt(Gamma(t)) * exp(i arg xi(t)) for a custom envelope.

    Gamma(t) = |xi(t)|**2 / (1 - int_0^t |xi|**2), clipped at ``gamma_max``.
    Past the end of the envelope grid the coupling stays at ``gamma_max`` so any
    residual excitation drains out of the virtual cavity.
    """

    def __init__(self, envelope: PhotonEnvelope, gamma_max: float):
        if envelope.kind != "custom":
            raise ValueError("shaped coupling needs a sampled envelope")
        total = envelope.norm()
        if total > 1 + 1e-9:
            raise ValueError(f"envelope norm {total:.12g} exceeds 1")
        self.envelope = envelope
        self.gamma_max = gamma_max
        t = envelope.t
        h = np.diff(t)
        a = envelope.samples[:-1]
        b = np.diff(envelope.samples) / h
        pieces = (np.abs(a) ** 2 * h + (a.conj() * b).real * h**2 + np.abs(b) ** 2 * h**3 / 3)
        self._cum = np.concatenate([[0.0], np.cumsum(pieces)])
        self.clipped = False

    def cumulative(self, t: float) -> float:
        env = self.envelope
        if t <= env.t[0]:
            return 0.0
        if t >= env.t[-1]:
            return float(self._cum[-1])
        i = int(np.searchsorted(env.t, t, side="right") - 1)
        s = t - env.t[i]
        h = env.t[i + 1] - env.t[i]
        a = env.samples[i]
        b = (env.samples[i + 1] - a) / h
        return float(self._cum[i] + abs(a) ** 2 * s + (a.conjugate() * b).real * s**2 + abs(b) ** 2 * s**3 / 3)

    def rate(self, t: float) -> float:
        env = self.envelope
        if t >= env.t[-1]:
            return self.gamma_max
        amp2 = abs(complex(env(t))) ** 2
        remaining = 1.0 - self.cumulative(t)
        if remaining <= REMAINING_NORM_FLOOR:
            self.clipped = True
            return self.gamma_max if amp2 > 0 else 0.0
        g = amp2 / remaining
        if g > self.gamma_max:
            self.clipped = True
            return self.gamma_max
        return g

    def __call__(self, t: float) -> complex:
        env = self.envelope
        r = self.rate(t)
        if t >= env.t[-1]:
            return math.sqrt(r)
        x = complex(env(t))
        phase = x / abs(x) if abs(x) > 0 else 1.0
        return math.sqrt(r) * phase


def shaped_bandwidth(f, t, gamma: float = 1.0, gamma_max: float | None = None):
    """Source decay rate that makes a virtual cavity emit the amplitude ``f``.

    Returns ``(rates, clipped)`` with rates sampled on ``t``.
    """
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=complex)
    if t.shape != f.shape or t.ndim != 1:
        raise ValueError("f and t must be matching 1-D arrays")
    gamma_max = GAMMA_MAX_FACTOR * gamma if gamma_max is None else gamma_max
    env = PhotonEnvelope.custom(t, f, normalize=False)
    coupling = ShapedCoupling(env, gamma_max)
    total = coupling.cumulative(t[-1])
    if total > 1 + 1e-9:
        raise ValueError(f"pulse norm {total:.12g} exceeds 1")
    rates = np.empty(t.size)
    clipped = False
    for i, ti in enumerate(t):
        remaining = 1.0 - coupling.cumulative(ti)
        amp2 = abs(f[i]) ** 2
        if remaining <= REMAINING_NORM_FLOOR:
            if np.any(np.abs(f[i + 1:]) > 0):
                raise ValueError(f"pulse norm exhausted at t={ti:g} before the pulse ends")
            rates[i] = gamma_max if amp2 > 0 else 0.0
            clipped = clipped or amp2 > 0
            continue
        rate = amp2 / remaining
        if rate > gamma_max:
            rate, clipped = gamma_max, True
        rates[i] = rate
    return rates, clipped


# --------------------------------------------------------------------------
# virtual source


def coherent_cutoff(nbar: float, tail: float = COHERENT_TAIL) -> int:
    """Fock cutoff for a coherent mode: at least ceil(n + 4 sqrt(n) + 3) and a top-level weight below ``tail``."""
    if nbar <= 0:
        return 1
    n = math.ceil(nbar + 4 * math.sqrt(nbar) + 3)
    while _poisson_log(nbar, n - 1) > math.log(tail):
        n += 1
    return n


def minimum_coherent_cutoff(nbar: float) -> int:
    return 1 if nbar <= 0 else math.ceil(nbar + 4 * math.sqrt(nbar) + 3)


def _poisson_log(nbar: float, k: int) -> float:
    return -nbar + k * math.log(nbar) - gammaln(k + 1)


def default_layout(probe: ProbeState) -> HilbertLayout:
    """Smallest layout satisfying the cutoff rules for ``probe``."""
    jr, jl = probe.jones
    if probe.statistics == "superposition":
        nr = 3 if abs(jr) > 0 and probe.nbar > 0 else 1
        nl = 3 if abs(jl) > 0 and probe.nbar > 0 else 1
    else:
        nr = coherent_cutoff(probe.nbar * abs(jr) ** 2)
        nl = coherent_cutoff(probe.nbar * abs(jl) ** 2)
    return HilbertLayout(nr, nl)


def _coherent_vector(z: complex, n: int) -> np.ndarray:
    k = np.arange(n)
    if z == 0:
        v = np.zeros(n, complex)
        v[0] = 1.0
        return v
    logmag = -abs(z) ** 2 / 2 + k * math.log(abs(z)) - 0.5 * gammaln(k + 1)
    v = np.exp(logmag) * np.exp(1j * np.angle(z) * k)
    return v / np.linalg.norm(v)


def source_coupling(probe: ProbeState, gamma: float = 1.0):
    """Coefficient of a_k in the source collapse operators (constant or callable)."""
    env = probe.envelope
    if env.kind == "exponential":
        return math.sqrt(env.bandwidth)
    return ShapedCoupling(env, GAMMA_MAX_FACTOR * gamma)


@dataclass(frozen=True, eq=False)
class VirtualSource:
    triple: SLHTriple
    state: np.ndarray  # source ket on the R x L modes
    layout: HilbertLayout
    coupling: object


def virtual_source(probe: ProbeState, layout: HilbertLayout | None = None, gamma: float = 1.0) -> VirtualSource:
    """Two-mode virtual cavity whose output is the probe pulse, and its initial state."""
    layout = default_layout(probe) if layout is None else layout
    jr, jl = probe.jones
    if probe.statistics == "superposition":
        for n_mode, j, name in ((layout.fock_r, jr, "R"), (layout.fock_l, jl, "L")):
            if abs(j) > 0 and probe.nbar > 0 and n_mode < 2:
                raise ValueError(f"Fock cutoff for mode {name} too small; use at least 2")
        state = np.zeros(layout.fock_r * layout.fock_l, complex)
        state[0] = probe.c0
        if probe.nbar > 0:
            if abs(jr) > 0:
                state[1 * layout.fock_l + 0] += probe.c1 * jr
            if abs(jl) > 0:
                state[0 * layout.fock_l + 1] += probe.c1 * jl
    else:
        alpha = math.sqrt(probe.nbar)
        for n_mode, j, name in ((layout.fock_r, jr, "R"), (layout.fock_l, jl, "L")):
            need = minimum_coherent_cutoff(probe.nbar * abs(j) ** 2)
            if n_mode < need:
                raise ValueError(f"Fock cutoff {n_mode} for mode {name} too small for nbar={probe.nbar}; "
                                 f"use at least {coherent_cutoff(probe.nbar * abs(j) ** 2)}")
        state = np.kron(_coherent_vector(alpha * jr, layout.fock_r), _coherent_vector(alpha * jl, layout.fock_l))
    coupling = source_coupling(probe, gamma)
    L = (Op.from_matrix(layout.a_r, coupling, source_degree=1),
         Op.from_matrix(layout.a_l, coupling, source_degree=1))
    return VirtualSource(SLHTriple(L, Op.zero(layout.dim)), state, layout, coupling)


def coherent_drive_triple(layout: HilbertLayout, beta_r, beta_l=0.0) -> SLHTriple:
    """Classical drive as a c-number source: L_k = beta_k(t) * identity.

    Cascading this into the emitter gives the displaced-frame description of a
    coherent input; ``beta_k`` may be constants or callables of time.
    """
    ident = layout.identity
    L = (Op.from_matrix(ident, beta_r, source_degree=1), Op.from_matrix(ident, beta_l, source_degree=1))
    return SLHTriple(L, Op.zero(layout.dim))


def emitter_state(spin: str) -> np.ndarray:
    """Emitter ket for 'up', 'down', 'plus' ((up + down)/sqrt 2) or a trion level."""
    v = np.zeros(4, complex)
    if spin == "up":
        v[UP] = 1
    elif spin == "down":
        v[DOWN] = 1
    elif spin == "plus":
        v[UP] = v[DOWN] = 1 / math.sqrt(2)
    elif spin == "trion_up":
        v[2] = 1
    elif spin == "trion_down":
        v[3] = 1
    else:
        raise ValueError(f"unknown emitter state {spin!r}")
    return v


def initial_density(layout: HilbertLayout, spin: str, source_state: np.ndarray | None = None) -> np.ndarray:
    e = emitter_state(spin)
    if source_state is None:
        source_state = np.zeros(layout.fock_r * layout.fock_l, complex)
        source_state[0] = 1.0
    psi = np.kron(e, source_state)
    return np.outer(psi, psi.conj())
