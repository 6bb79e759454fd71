"""Michelson-interferometer spin readout with click/no-click detection.

The probe enters a balanced beam splitter.  One arm holds the spin-photon
interface, the other a phase plate, and a single polarisation-insensitive
detector watches one output port.  Since only R light couples to spin up, an
R-polarised probe makes the spin-up branch pick up the pi phase flip while
the spin-down branch passes untouched.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .params import BhatResult, EmitterParams, ImperfectionParams, ProbeState
from .parallel import guarded, ordered_map
from .slh.integrate import Trajectory, integrate
from .slh.liouvillian import Liouvillian, apply_efficiency, assemble_generator
from .slh.model import long_time_floor, population_stop, standard_observables, T_MAX_FACTOR
from .slh.operators import HilbertLayout, Op
from .slh.triple import (SLHTriple, default_layout, emitter_triple, initial_density, series_product,
                         virtual_source)

BHAT_FLOOR = 1e-12
BHAT_CEIL = 1.0 - 1e-9
CALIBRATION_BANDWIDTH = 1e-2


def wrap_phase(phi: float) -> float:
    """Map to (-pi, pi]."""
    w = math.remainder(phi, 2 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True, eq=False)
class MichelsonConfig:
    phi: float
    probe: ProbeState
    emitter: EmitterParams = field(default_factory=EmitterParams)

    def __post_init__(self):
        if not -math.pi < self.phi <= math.pi:
            raise ValueError(f"phase must lie in (-pi, pi], got {self.phi}")

    @property
    def imp(self) -> ImperfectionParams:
        return self.emitter.imperfections

    def with_phase(self, phi: float) -> "MichelsonConfig":
        return MichelsonConfig(wrap_phase(phi), self.probe, self.emitter)


@dataclass(frozen=True)
class ClickStatistics:
    p_click_up: float
    p_click_down: float

    def __post_init__(self):
        for p in (self.p_click_up, self.p_click_down):
            if not -1e-9 <= p <= 1 + 1e-9:
                raise ValueError(f"click probability {p} outside [0, 1]")
        object.__setattr__(self, "p_click_up", min(max(self.p_click_up, 0.0), 1.0))
        object.__setattr__(self, "p_click_down", min(max(self.p_click_down, 0.0), 1.0))

    @property
    def contrast(self) -> float:
        return self.p_click_up - self.p_click_down


@dataclass(frozen=True, eq=False)
class MichelsonModel:
    """Composed interferometer: detector-port operators and both generators."""

    config: MichelsonConfig
    layout: HilbertLayout
    triple: SLHTriple          # channels (d_R, d_L, e_R, e_L): monitored port then dark port
    detector: tuple            # (d_R, d_L) after efficiency scaling
    generator: Liouvillian     # unconditional
    no_click_generator: Liouvillian
    source_state: np.ndarray
    t_floor: float

    def initial_state(self, spin: str) -> np.ndarray:
        return initial_density(self.layout, spin, self.source_state)

    def observables(self) -> dict:
        return standard_observables(self.layout)

    def run(self, spin: str, conditional: bool = True, **kwargs) -> Trajectory:
        gen = self.no_click_generator if conditional else self.generator
        t_max = kwargs.pop("t_max", T_MAX_FACTOR * self.t_floor)
        return integrate(gen, self.initial_state(spin), t_max, observables=self.observables(),
                         stop=population_stop(self.t_floor),
                         truncation_projectors=self.layout.top_level_projectors(), **kwargs)


def michelson_compose(cfg: MichelsonConfig, layout: HilbertLayout | None = None,
                      detector_basis: np.ndarray | None = None) -> MichelsonModel:
    """Build the interferometer: arm operators, beam-splitter mixing and the no-click generator.

    SPI arm:   L_k = sqrt(gamma) sigma_k + c a_k / sqrt 2,  H = V / sqrt 2
    phase arm: M_k = c a_k / sqrt 2
    ports:     d_k = (L_k + e^{i phi} M_k) / sqrt 2,  e_k = (-L_k + e^{i phi} M_k) / sqrt 2

    ``detector_basis`` optionally rotates (d_R, d_L) by a 2x2 unitary; the
    no-click generator must not depend on it.
    """
    probe, emitter = cfg.probe, cfg.emitter
    layout = default_layout(probe) if layout is None else layout
    src = virtual_source(probe, layout, emitter.gamma)
    half = src.triple.L[0] * (1 / math.sqrt(2)), src.triple.L[1] * (1 / math.sqrt(2))
    arm_source = SLHTriple(half, Op.zero(layout.dim))
    arm = series_product(emitter_triple(layout, emitter.gamma), arm_source)
    phase = np.exp(1j * cfg.phi)
    r2 = 1 / math.sqrt(2)
    ports_d = tuple(((L + M * phase) * r2).simplify() for L, M in zip(arm.L, half))
    ports_e = tuple(((L * -1.0 + M * phase) * r2).simplify() for L, M in zip(arm.L, half))
    if detector_basis is not None:
        u = np.asarray(detector_basis, dtype=complex)
        if u.shape != (2, 2) or not np.allclose(u.conj().T @ u, np.eye(2), atol=1e-12):
            raise ValueError("detector basis change must be a 2x2 unitary")
        ports_d = tuple((ports_d[0] * u[i, 0] + ports_d[1] * u[i, 1]).simplify() for i in range(2))
    G = SLHTriple(ports_d + ports_e, arm.H)
    G_eff, losses = apply_efficiency(G, emitter.eta)
    imp = ImperfectionParams(emitter.gamma_star, 1.0)
    gen = assemble_generator(G_eff, imp, layout=layout, extra_channels=losses)
    detector = G_eff.L[:2]
    no_click = assemble_generator(G_eff, imp, layout=layout, extra_channels=losses, subtract_jumps=detector)
    return MichelsonModel(cfg, layout, G_eff, detector, gen, no_click, src.state,
                          long_time_floor(probe, emitter.gamma))


def no_click_probability(cfg: MichelsonConfig, spin: str, model: MichelsonModel | None = None,
                         return_trajectory: bool = False):
    """Probability of seeing no photon at the monitored port, given the spin state."""
    if spin not in ("up", "down"):
        raise ValueError("spin must be 'up' or 'down'")
    if cfg.probe.nbar == 0:
        return (1.0, None) if return_trajectory else 1.0
    model = michelson_compose(cfg) if model is None else model
    traj = model.run(spin, conditional=True)
    p0 = float(traj.step_observables["trace"][-1].real)
    p0 = min(max(p0, 0.0), 1.0)
    return (p0, traj) if return_trajectory else p0


def click_statistics(cfg: MichelsonConfig, model: MichelsonModel | None = None) -> tuple[ClickStatistics, bool]:
    """Click probabilities for both spin states and whether both runs converged."""
    if cfg.probe.nbar == 0:
        return ClickStatistics(0.0, 0.0), True
    model = michelson_compose(cfg) if model is None else model
    up, tu = no_click_probability(cfg, "up", model, return_trajectory=True)
    down, td = no_click_probability(cfg, "down", model, return_trajectory=True)
    return ClickStatistics(1.0 - up, 1.0 - down), tu.converged and td.converged


def cbhat(stats: ClickStatistics) -> BhatResult:
    """Classical Bhattacharyya coefficient of the binary click distributions."""
    pu, pd = stats.p_click_up, stats.p_click_down
    value = math.sqrt(pu * pd) + math.sqrt((1 - pu) * (1 - pd))
    return BhatResult(value=min(value, 1.0), method="classical",
                      params={"p_click_up": pu, "p_click_down": pd})


def interferometer_qbhat(cfg: MichelsonConfig, model: MichelsonModel | None = None) -> BhatResult:
    """qBhat of the light leaving the interferometer, from the remaining spin coherence."""
    if cfg.probe.nbar == 0:
        return BhatResult(1.0, "numeric-slh", {"nbar": 0.0})
    model = michelson_compose(cfg) if model is None else model
    traj = model.run("plus", conditional=False)
    value = 2.0 * abs(traj.step_observables["coherence"][-1])
    return BhatResult(value=min(value, 1.0), method="numeric-slh",
                      params={"statistics": cfg.probe.statistics, "nbar": cfg.probe.nbar,
                              "Gamma": cfg.probe.bandwidth},
                      converged=traj.converged, time=traj.final_time)


def coherent_interferometer_qbhat(nbar: float, Gamma: float, emitter: EmitterParams | None = None) -> BhatResult:
    """Coherent-probe qBhat in the interferometer via the displaced frame.

    For coherent input the virtual cavity can be replaced by its mean field; the
    SPI arm then sees amplitude sqrt(nbar Gamma / 2) exp(-Gamma t / 2) and the
    reference arm drops out of the spin dynamics entirely.
    """
    from .slh.model import driven_model

    emitter = EmitterParams() if emitter is None else emitter
    if nbar == 0:
        return BhatResult(1.0, "numeric-slh", {"nbar": 0.0})
    amp = math.sqrt(nbar * Gamma / 2)

    def beta(t):
        return amp * math.exp(-Gamma * t / 2)

    floor = max(12.0 / emitter.gamma, 12.0 / Gamma)
    traj = driven_model(beta, 0.0, emitter, spin="plus", t_floor=floor).run()
    value = 2.0 * abs(traj.step_observables["coherence"][-1])
    return BhatResult(value=min(value, 1.0), method="numeric-slh",
                      params={"statistics": "coherent", "nbar": nbar, "Gamma": Gamma, "engine": "displaced"},
                      converged=traj.converged, time=traj.final_time)


def reference_probe(Gamma: float = CALIBRATION_BANDWIDTH, nbar: float = 1.0) -> ProbeState:
    return ProbeState.single_photon(nbar, Gamma, polarization="R")


def calibrate_phase(emitter: EmitterParams | None = None, probe: ProbeState | None = None, *,
                    n_scan: int = 12, xtol: float = 1e-3, flat_tol: float = 1e-6) -> float:
    """Arm phase maximising the click contrast p_up - p_down.

    A coarse scan over (-pi, pi] picks the best sample, then golden-section
    search refines it within one scan spacing (on the unwrapped angle, so a
    maximum sitting at +-pi is found just as well).
    """
    emitter = EmitterParams() if emitter is None else emitter
    probe = reference_probe() if probe is None else probe

    cache = {}

    def contrast(phi):
        key = round(wrap_phase(phi), 12)
        if key not in cache:
            stats, _ = click_statistics(MichelsonConfig(wrap_phase(phi), probe, emitter))
            cache[key] = stats.contrast
        return cache[key]

    grid = np.pi - 2 * np.pi * np.arange(n_scan) / n_scan  # pi, ..., excluding -pi
    vals = np.array([contrast(p) for p in grid])
    if vals.max() - vals.min() < flat_tol:
        raise ValueError("click contrast does not depend on the phase: no spin-light coupling")
    k = int(np.argmax(vals))
    step = 2 * np.pi / n_scan
    centre = grid[k]
    res = minimize_scalar(lambda p: -contrast(p), bracket=(centre - step, centre, centre + step),
                          method="golden", options={"xtol": xtol / (abs(centre) + step)})
    best = res.x if -res.fun >= vals[k] else centre
    return wrap_phase(float(best))


@dataclass
class ReadoutCurves:
    Gamma: np.ndarray
    b_cl_qs: np.ndarray
    b_q_qs: np.ndarray
    b_q_cs: np.ndarray
    p_click_up: np.ndarray
    p_click_down: np.ndarray
    converged: np.ndarray
    phi: float
    errors: dict = field(default_factory=dict)

    def ordering_ok(self, tol: float = 5e-3) -> np.ndarray:
        return self.b_cl_qs >= self.b_q_qs - tol

    def region_one(self) -> np.ndarray:
        """Grid points where the single-photon measurement beats the coherent pre-measurement."""
        return self.b_cl_qs < self.b_q_cs

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["Gamma_over_gamma", "B_cl_qs", "B_q_qs", "B_q_cs", "p_click_up", "p_click_down",
                        "converged", "error"])
            for i, g in enumerate(self.Gamma):
                w.writerow([repr(float(g))] + [_fmt(a[i]) for a in (self.b_cl_qs, self.b_q_qs, self.b_q_cs,
                                                                     self.p_click_up, self.p_click_down)]
                           + [int(self.converged[i]), self.errors.get(i, "")])


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _readout_point(args):
    Gamma, nbar, phi, emitter = args
    probe = ProbeState.single_photon(nbar, Gamma, polarization="R")
    cfg = MichelsonConfig(phi, probe, emitter)
    model = michelson_compose(cfg)
    stats, conv = click_statistics(cfg, model)
    bq = interferometer_qbhat(cfg, model)
    bcs = coherent_interferometer_qbhat(nbar, Gamma, emitter)
    return (cbhat(stats).value, bq.value, bcs.value, stats.p_click_up, stats.p_click_down,
            conv and bq.converged and bcs.converged)


def readout_curves(Gamma_axis, *, nbar: float = 1.0, emitter: EmitterParams | None = None,
                   phi: float | None = None, workers: int | None = None) -> ReadoutCurves:
    """B_cl (single photon), B_q (single photon) and B_q (coherent) against pulse bandwidth."""
    emitter = EmitterParams() if emitter is None else emitter
    Gamma_axis = np.asarray(Gamma_axis, dtype=float)
    if np.any(np.diff(Gamma_axis) <= 0) or np.any(Gamma_axis <= 0):
        raise ValueError("bandwidth axis must be positive and strictly increasing")
    phi = calibrate_phase(emitter) if phi is None else wrap_phase(phi)
    results = ordered_map(guarded(_readout_point), [(float(g), nbar, phi, emitter) for g in Gamma_axis], workers)
    n = Gamma_axis.size
    cols = np.full((6, n), np.nan)
    errors = {}
    for i, (res, err) in enumerate(results):
        if err is not None:
            errors[i] = err
            cols[5, i] = 0
            continue
        cols[:, i] = res
    return ReadoutCurves(Gamma_axis, cols[0], cols[1], cols[2], cols[3], cols[4],
                         cols[5].astype(bool) & ~np.isnan(cols[0]), phi, errors)


# --------------------------------------------------------------------------
# advantage map


def log_ratio(b_cl: float, b_q: float) -> float:
    """log(B_cl) / log(B_q) with both coefficients clamped into [1e-12, 1 - 1e-9]."""
    b_cl = min(max(b_cl, BHAT_FLOOR), BHAT_CEIL)
    b_q = min(max(b_q, BHAT_FLOOR), BHAT_CEIL)
    return math.log(b_cl) / math.log(b_q)


def _advantage_cell(args):
    eta, gamma_star, Gamma, phi, gamma = args
    emitter = EmitterParams(gamma=gamma, gamma_star=gamma_star, eta=eta)
    probe = ProbeState.single_photon(1.0, Gamma, polarization="R")
    cfg = MichelsonConfig(phi, probe, emitter)
    stats, conv = click_statistics(cfg)
    b_cl = cbhat(stats).value
    b_cs = coherent_interferometer_qbhat(1.0, Gamma, emitter)
    return log_ratio(b_cl, b_cs.value), b_cl, b_cs.value, conv and b_cs.converged


@dataclass
class AdvantageMap:
    eta_axis: np.ndarray
    gamma_star_axis: np.ndarray
    ratio: np.ndarray        # [i_eta, j_gamma_star]
    b_cl: np.ndarray
    b_q_cs: np.ndarray
    converged: np.ndarray
    Gamma: float
    phi: float
    errors: dict = field(default_factory=dict)

    @property
    def in_region(self) -> np.ndarray:
        return self.ratio > 1.0

    def eta_threshold(self, gamma_star: float = 0.0) -> float | None:
        j = int(np.argmin(np.abs(self.gamma_star_axis - gamma_star)))
        return crossing(self.eta_axis, self.ratio[:, j] - 1.0)

    def gamma_star_threshold(self, eta: float = 1.0) -> float | None:
        i = int(np.argmin(np.abs(self.eta_axis - eta)))
        return crossing(self.gamma_star_axis, self.ratio[i, :] - 1.0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eta", "gamma_star_over_gamma", "log_ratio", "in_region", "B_cl_qs", "B_q_cs",
                        "converged", "error"])
            for i, e in enumerate(self.eta_axis):
                for j, g in enumerate(self.gamma_star_axis):
                    r = self.ratio[i, j]
                    w.writerow([repr(float(e)), repr(float(g)), _fmt(r), int(bool(r > 1.0)),
                                _fmt(self.b_cl[i, j]), _fmt(self.b_q_cs[i, j]), int(self.converged[i, j]),
                                self.errors.get((i, j), "")])


def crossing(axis, values) -> float | None:
    """First sign change of ``values`` along ``axis``, linearly interpolated."""
    axis = np.asarray(axis, float)
    values = np.asarray(values, float)
    for k in range(axis.size - 1):
        a, b = values[k], values[k + 1]
        if np.isnan(a) or np.isnan(b):
            continue
        if a == 0:
            return float(axis[k])
        if a * b < 0:
            return float(axis[k] + (axis[k + 1] - axis[k]) * a / (a - b))
    if values.size and values[-1] == 0:
        return float(axis[-1])
    return None


def advantage_map(eta_axis, gamma_star_axis, *, Gamma: float = 5e-2, gamma: float = 1.0,
                  phi: float | None = None, workers: int | None = None) -> AdvantageMap:
    """Relative information-extraction efficiency log(B_cl^qs) / log(B_q^cs) over (eta, gamma_*)."""
    eta_axis = np.asarray(eta_axis, float)
    gs_axis = np.asarray(gamma_star_axis, float)
    for ax, name in ((eta_axis, "eta"), (gs_axis, "gamma_star")):
        if ax.ndim != 1 or ax.size == 0 or np.any(np.diff(ax) <= 0):
            raise ValueError(f"{name} axis must be strictly increasing")
    phi = calibrate_phase(EmitterParams(gamma=gamma)) if phi is None else wrap_phase(phi)
    cells = [(float(e), float(g) * gamma, Gamma * gamma, phi, gamma) for e in eta_axis for g in gs_axis]
    results = ordered_map(guarded(_advantage_cell), cells, workers)
    shape = (eta_axis.size, gs_axis.size)
    ratio, bcl, bcs = (np.full(shape, np.nan) for _ in range(3))
    conv = np.zeros(shape, bool)
    errors = {}
    for k, (res, err) in enumerate(results):
        i, j = divmod(k, gs_axis.size)
        if err is not None:
            errors[(i, j)] = err
            continue
        ratio[i, j], bcl[i, j], bcs[i, j], conv[i, j] = res
    return AdvantageMap(eta_axis, gs_axis, ratio, bcl, bcs, conv, Gamma, phi, errors)
