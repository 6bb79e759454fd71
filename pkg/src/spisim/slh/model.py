"""Ready-made cascaded models (virtual source into the spin-photon interface) and numeric qBhat."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..params import BhatResult, EmitterParams, ProbeState
from .integrate import Trajectory, integrate
from .liouvillian import Liouvillian, apply_efficiency, assemble_generator
from .operators import DOWN, TRION_DOWN, TRION_UP, UP, HilbertLayout
from .triple import (SLHTriple, coherent_drive_triple, default_layout, emitter_triple,
                     initial_density, series_product, virtual_source)

CONVERGENCE_TOL = 1e-8
T_MAX_FACTOR = 10.0


def long_time_floor(probe: ProbeState | None, gamma: float = 1.0) -> float:
    """Earliest time at which the long-time criterion may be declared."""
    floor = 12.0 / gamma
    if probe is None:
        return floor
    env = probe.envelope
    if env.kind == "exponential":
        return max(floor, 12.0 / env.bandwidth)
    return env.end_time + floor


def population_stop(t_floor: float, tol: float = CONVERGENCE_TOL):
    """Stop once past ``t_floor`` with emitter excitation and source occupation below ``tol``."""
    def stop(t, values):
        if t < t_floor:
            return False
        exc = abs(values["excited"])
        src = abs(values.get("source", 0.0))
        return exc < tol and src < tol
    return stop


def standard_observables(layout: HilbertLayout, L: tuple | None = None) -> dict:
    obs = {
        "trace": layout.identity,
        "excited": layout.projector(TRION_UP) + layout.projector(TRION_DOWN),
        "pop_up": layout.projector(UP),
        "pop_down": layout.projector(DOWN),
        "pop_trion_up": layout.projector(TRION_UP),
        "pop_trion_down": layout.projector(TRION_DOWN),
        # Tr(|up><down| rho) = rho[down, up]
        "coherence": layout.transition(UP, DOWN),
        "sigma_r": layout.sigma_r,
        "sigma_l": layout.sigma_l,
    }
    if layout.fock_r > 1 or layout.fock_l > 1:
        ar, al = layout.a_r, layout.a_l
        obs["source"] = (ar.conj().T @ ar + al.conj().T @ al).tocsr()
        obs["a_r"] = ar
        obs["a_l"] = al
    if L is not None:
        # output-field moments <L_k>, <L_j^dag L_k> in the (R, L) channel basis
        for i, name in enumerate(("r", "l")):
            obs[f"out_{name}"] = L[i]
        obs["out_rr"] = L[0].dag() @ L[0]
        obs["out_ll"] = L[1].dag() @ L[1]
        obs["out_rl"] = L[0].dag() @ L[1]
    return obs


@dataclass(frozen=True, eq=False)
class CascadedModel:
    """Generator, initial state and bookkeeping for one source + emitter configuration."""

    layout: HilbertLayout
    triple: SLHTriple
    generator: Liouvillian
    rho0: np.ndarray
    observables: dict
    t_floor: float
    breakpoints: tuple = ()

    def run(self, *, t_eval=None, t_max: float | None = None, store_states_at=(), stop=True,
            rtol: float | None = None, atol: float | None = None, extra_observables=None) -> Trajectory:
        t_max = T_MAX_FACTOR * self.t_floor if t_max is None else t_max
        observables = dict(self.observables)
        if extra_observables:
            observables.update(extra_observables)
        kwargs = {}
        if rtol is not None:
            kwargs["rtol"] = rtol
        if atol is not None:
            kwargs["atol"] = atol
        traj = integrate(self.generator, self.rho0, t_max, t_eval=t_eval, observables=observables,
                         stop=population_stop(self.t_floor) if stop else None,
                         breakpoints=self.breakpoints, store_states_at=store_states_at,
                         truncation_projectors=self.layout.top_level_projectors(), **kwargs)
        traj.meta.update(layout=(self.layout.fock_r, self.layout.fock_l), t_floor=self.t_floor)
        return traj


def spi_model(probe: ProbeState, emitter: EmitterParams | None = None, spin: str = "plus",
              layout: HilbertLayout | None = None) -> CascadedModel:
    """Probe pulse from a virtual cavity cascaded into the four-level emitter."""
    emitter = EmitterParams() if emitter is None else emitter
    layout = default_layout(probe) if layout is None else layout
    src = virtual_source(probe, layout, emitter.gamma)
    G = series_product(emitter_triple(layout, emitter.gamma), src.triple)
    gen = assemble_generator(G, emitter.imperfections, layout=layout)
    G_eff, _ = apply_efficiency(G, emitter.eta)
    rho0 = initial_density(layout, spin, src.state)
    return CascadedModel(layout, G_eff, gen, rho0, standard_observables(layout, G_eff.L),
                         long_time_floor(probe, emitter.gamma))


def driven_model(beta_r, beta_l=0.0, emitter: EmitterParams | None = None, spin: str = "up",
                 t_floor: float = 12.0, breakpoints=()) -> CascadedModel:
    """Emitter driven by a classical field (c-number source) in the displaced frame."""
    emitter = EmitterParams() if emitter is None else emitter
    layout = HilbertLayout(1, 1)
    G = series_product(emitter_triple(layout, emitter.gamma), coherent_drive_triple(layout, beta_r, beta_l))
    gen = assemble_generator(G, emitter.imperfections, layout=layout)
    G_eff, _ = apply_efficiency(G, emitter.eta)
    return CascadedModel(layout, G_eff, gen, initial_density(layout, spin), standard_observables(layout, G_eff.L),
                         t_floor, tuple(breakpoints))


def spin_coherence_bhat(traj: Trajectory) -> float:
    """2 |Tr(|up><down| rho)| at the end of a run started from (|up> + |down>)/sqrt 2."""
    return 2.0 * abs(traj.step_observables["coherence"][-1])


def qbhat_numeric(traj: Trajectory, params: dict | None = None) -> BhatResult:
    """Quantum Bhattacharyya coefficient from the spin coherence left after the pulse."""
    c0 = traj.step_observables["coherence"][0]
    if abs(abs(c0) - 0.5) > 1e-9:
        raise ValueError("run must start with the spin in (|up> + |down>)/sqrt 2")
    value = spin_coherence_bhat(traj)
    return BhatResult(value=min(value, 1.0), method="numeric-slh", params=dict(params or {}),
                      error_estimate=abs(traj.step_observables["excited"][-1]) + abs(
                          traj.step_observables.get("source", [0.0])[-1]),
                      converged=traj.converged, time=traj.final_time)


def numeric_qbhat(probe: ProbeState, emitter: EmitterParams | None = None,
                  layout: HilbertLayout | None = None, **run_kwargs) -> BhatResult:
    """Convenience wrapper: build the SPI model, run to the long-time limit, read qBhat."""
    if probe.nbar == 0:
        return BhatResult(1.0, "numeric-slh", {"nbar": 0.0})
    model = spi_model(probe, emitter, "plus", layout)
    traj = model.run(**run_kwargs)
    emitter = EmitterParams() if emitter is None else emitter
    params = {"statistics": probe.statistics, "nbar": probe.nbar, "bandwidth": probe.bandwidth,
              "gamma_star": emitter.gamma_star, "eta": emitter.eta,
              "fock": (model.layout.fock_r, model.layout.fock_l)}
    return qbhat_numeric(traj, params)
