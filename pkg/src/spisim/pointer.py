"""Quantum Bhattacharyya coefficients of spin-conditioned pointer states.

The probe is H-polarised, so each spin state drives one circular transition:
spin up scatters the R half of the pulse, spin down the L half.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .analytic import SquareDriveParams, f0_amplitudes, scattered_overlap
from .params import BhatResult, EmitterParams, ProbeState
from .parallel import guarded, ordered_map
from .slh.model import driven_model, numeric_qbhat

__all__ = [
    "ProbeState", "BhatResult", "SweepGrid",
    "qbhat_coherent_square", "qbhat_quantum_exp", "qbhat_quantum_general",
    "qbhat_coherent_numeric", "sweep_qbhat",
]

LONG_TIME_AFTER_PULSE = 10.0


def qbhat_coherent_square(d: SquareDriveParams, tau: float | None = None) -> BhatResult:
    """qBhat for a square coherent pulse: the probability that nothing was scattered.

    ``d`` describes the drive seen by one transition (half the H-polarised
    input energy) and ``d.tau`` its duration; ``tau`` is the evaluation time,
    by default ``10/gamma`` after the pulse.  Once the drive is off the
    no-emission ground-state amplitude is frozen, so any ``tau`` at least that
    late gives the long-time value.
    """
    t_long = d.tau + LONG_TIME_AFTER_PULSE / d.gamma
    tau = t_long if tau is None else tau
    if tau < 0:
        raise ValueError("evaluation time must be non-negative")
    f0g, _ = f0_amplitudes(d, min(tau, d.tau))
    return BhatResult(value=abs(f0g) ** 2, method="analytic-square",
                      params={"rabi": d.rabi, "gamma": d.gamma, "duration": d.tau, "tau": tau},
                      error_estimate=1e-14, converged=tau >= t_long - 1e-12)


def qbhat_quantum_exp(nbar: float, Gamma: float, gamma: float = 1.0) -> BhatResult:
    """Closed form |1 - 2 nbar gamma / (gamma + Gamma)| for an exponential zero/one-photon probe."""
    if not 0.0 <= nbar <= 1.0:
        raise ValueError(f"nbar must lie in [0, 1], got {nbar}")
    if not (Gamma > 0 and gamma > 0):
        raise ValueError("rates must be positive")
    # (gamma + Gamma - 2 nbar gamma) / (gamma + Gamma) vanishes exactly on the zero line
    value = abs((gamma + Gamma) - 2.0 * nbar * gamma) / (gamma + Gamma)
    return BhatResult(value=value, method="analytic-exponential",
                      params={"nbar": nbar, "Gamma": Gamma, "gamma": gamma})


def qbhat_quantum_general(probe: ProbeState, gamma: float = 1.0) -> BhatResult:
    """Pointer-state overlap for a zero/one-photon probe of arbitrary envelope.

    With s = int xi*(t) Upsilon(t) dt the overlap is
    |c0|^2 + |c1|^2 (|j_R|^2 s + |j_L|^2 s*), i.e. |c0|^2 + |c1|^2 Re s for H light.
    """
    if probe.statistics != "superposition":
        raise ValueError("qbhat_quantum_general needs a zero/one-photon superposition probe")
    norm = probe.envelope.norm()
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"envelope is not normalised (norm {norm:.12g})")
    jr, jl = probe.jones
    if probe.nbar == 0:
        s = 0j
    else:
        s = scattered_overlap(probe.envelope, gamma)
    overlap = abs(probe.c0) ** 2 + abs(probe.c1) ** 2 * (abs(jr) ** 2 * s + abs(jl) ** 2 * np.conj(s))
    return BhatResult(value=abs(overlap), method="overlap-quadrature",
                      params={"nbar": probe.nbar, "envelope": repr(probe.envelope), "gamma": gamma},
                      error_estimate=1e-12)


def qbhat_coherent_numeric(probe: ProbeState, emitter: EmitterParams | None = None,
                           engine: str = "displaced") -> BhatResult:
    """qBhat of a coherent probe from the SLH engine.

    ``engine="displaced"`` drives the emitter with the classical mean field
    (exact for coherent input and independent of any Fock cutoff);
    ``engine="fock"`` puts the pulse in a truncated virtual cavity.
    """
    if probe.statistics != "coherent":
        raise ValueError("expected a coherent probe")
    emitter = EmitterParams() if emitter is None else emitter
    if probe.nbar == 0:
        return BhatResult(1.0, "numeric-slh", {"nbar": 0.0})
    if engine == "fock":
        return numeric_qbhat(probe, emitter)
    if engine != "displaced":
        raise ValueError(f"unknown engine {engine!r}")
    if probe.envelope.kind != "exponential":
        raise ValueError("displaced-frame engine supports exponential envelopes only")
    G = probe.bandwidth
    alpha = math.sqrt(probe.nbar)
    jr, jl = probe.jones

    def beta_r(t, c=alpha * jr * math.sqrt(G)):
        return c * math.exp(-G * t / 2)

    def beta_l(t, c=alpha * jl * math.sqrt(G)):
        return c * math.exp(-G * t / 2)

    floor = max(12.0 / emitter.gamma, 12.0 / G)
    model = driven_model(beta_r, beta_l, emitter, spin="plus", t_floor=floor)
    traj = model.run()
    value = 2.0 * abs(traj.step_observables["coherence"][-1])
    return BhatResult(value=min(value, 1.0), method="numeric-slh",
                      params={"nbar": probe.nbar, "Gamma": G, "engine": "displaced"},
                      error_estimate=abs(traj.step_observables["excited"][-1]),
                      converged=traj.converged, time=traj.final_time)


@dataclass
class SweepGrid:
    """2-D grid of Bhattacharyya coefficients over (Gamma/gamma, nbar).

    ``values[i, j]`` belongs to ``gamma_axis[i]`` and ``nbar_axis[j]``.
    Failed cells hold NaN with the reason in ``errors``.
    """

    nbar_axis: np.ndarray
    gamma_axis: np.ndarray
    values: np.ndarray
    methods: np.ndarray
    converged: np.ndarray
    errors: dict = field(default_factory=dict)
    kind: str = "quantum"

    @property
    def shape(self):
        return self.values.shape

    @property
    def ok(self) -> bool:
        return not self.errors and bool(self.converged.all())

    def rows(self):
        for i, g in enumerate(self.gamma_axis):
            for j, n in enumerate(self.nbar_axis):
                yield (i, j, float(n), float(g), float(self.values[i, j]), str(self.methods[i, j]),
                       bool(self.converged[i, j]), self.errors.get((i, j), ""))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["nbar", "Gamma_over_gamma", "qbhat", "method", "converged", "error"])
            for _, _, n, g, v, m, c, e in self.rows():
                w.writerow([repr(n), repr(g), "" if math.isnan(v) else repr(v), m, int(c), e])


def _check_axis(axis, name):
    axis = np.asarray(axis, dtype=float)
    if axis.ndim != 1 or axis.size == 0:
        raise ValueError(f"{name} axis must be a non-empty 1-D sequence")
    if np.any(np.diff(axis) <= 0):
        raise ValueError(f"{name} axis must be strictly increasing")
    return axis


def _cell(args):
    kind, nbar, G, gamma, envelope = args
    if kind == "quantum":
        if envelope is None:
            return qbhat_quantum_exp(nbar, G, gamma)
        probe = ProbeState("superposition", nbar, envelope)
        return qbhat_quantum_general(probe, gamma)
    probe = ProbeState.coherent(nbar, G)
    return qbhat_coherent_numeric(probe, EmitterParams(gamma=gamma))


def sweep_qbhat(nbar_axis, gamma_axis, kind: str = "quantum", *, gamma: float = 1.0,
                workers: int | None = None) -> SweepGrid:
    """qBhat over a (Gamma/gamma, nbar) grid for exponential probes.

    ``kind="quantum"`` uses the closed form; ``kind="coherent"`` runs the engine
    for every cell.  Cells are independent and may run in parallel; the result
    does not depend on the number of workers.
    """
    if kind not in ("quantum", "coherent"):
        raise ValueError(f"unknown probe kind {kind!r}")
    nbar_axis = _check_axis(nbar_axis, "nbar")
    gamma_axis = _check_axis(gamma_axis, "Gamma")
    cells = [(kind, float(n), float(g) * gamma, gamma, None) for g in gamma_axis for n in nbar_axis]
    results = ordered_map(guarded(_cell), cells, workers)
    shape = (gamma_axis.size, nbar_axis.size)
    values = np.full(shape, np.nan)
    methods = np.full(shape, "", dtype=object)
    conv = np.zeros(shape, dtype=bool)
    errors = {}
    for k, (res, err) in enumerate(results):
        i, j = divmod(k, nbar_axis.size)
        if err is not None:
            errors[(i, j)] = err
            methods[i, j] = "failed"
            continue
        values[i, j] = res.value
        methods[i, j] = res.method
        conv[i, j] = res.converged
    return SweepGrid(nbar_axis, gamma_axis, values, methods, conv, errors, kind)
