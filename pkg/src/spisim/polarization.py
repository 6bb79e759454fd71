"""Spin-conditioned Stokes vectors and mean-field amplitudes of the scattered light."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .params import EmitterParams, ProbeState
from .slh.integrate import Trajectory
from .slh.model import driven_model, long_time_floor, spi_model

INTENSITY_FLOOR = 1e-10
N_PLOT = 400
# Stokes ratios of dim late-time light need absolute accuracy far below the flux
POL_RTOL = 1e-12
POL_ATOL = 1e-18

# detection modes as rows acting on (L_R, L_L): b_P = p_R L_R + p_L L_L
_S = 1 / math.sqrt(2)
MODE_ROWS = {
    "R": (1.0, 0.0),
    "L": (0.0, 1.0),
    "H": (_S, _S),
    "V": (1j * _S, -1j * _S),
    "A": (np.exp(1j * math.pi / 4) * _S, -1j * np.exp(1j * math.pi / 4) * _S),
    "D": (np.exp(-1j * math.pi / 4) * _S, 1j * np.exp(-1j * math.pi / 4) * _S),
}


@dataclass(frozen=True)
class StokesSample:
    t: float
    eps_x: float
    eps_y: float
    eps_z: float
    theta: float
    phi: float
    intensity: float

    @property
    def length(self) -> float:
        return math.sqrt(self.eps_x**2 + self.eps_y**2 + self.eps_z**2)


def polar_angles(s: StokesSample) -> tuple[float, float]:
    """Polar angle from the R pole and azimuth from H on the Poincare sphere."""
    return _angles(s.eps_x, s.eps_y, s.eps_z)


def _angles(ex, ey, ez):
    r = math.sqrt(ex * ex + ey * ey + ez * ez)
    if r == 0:
        raise ValueError("zero-length polarization vector has no angles")
    theta = math.acos(min(1.0, max(-1.0, ez / r)))
    phi = math.atan2(ey, ex)
    if phi == -math.pi:
        phi = math.pi
    return theta, phi


def unwrap_phi(samples: list[StokesSample]) -> np.ndarray:
    """Azimuths continued along the trajectory without 2 pi jumps."""
    return np.unwrap(np.array([s.phi for s in samples]))


def polarization_run(probe: ProbeState, spin: str, emitter: EmitterParams | None = None, *,
                     t_end: float | None = None, n_points: int = N_PLOT,
                     rtol: float = POL_RTOL, atol: float = POL_ATOL) -> Trajectory:
    """Integrate a source + emitter run with the spin in ``spin`` and sample it on a uniform grid.

    Coherent probes use the displaced frame (the mean field enters as a
    classical drive), which yields the same output moments without a Fock space.
    """
    if spin not in ("up", "down"):
        raise ValueError("spin must be 'up' or 'down'")
    emitter = EmitterParams() if emitter is None else emitter
    t_end = long_time_floor(probe, emitter.gamma) if t_end is None else t_end
    t_grid = np.linspace(0.0, t_end, n_points)
    if probe.statistics == "coherent" and probe.envelope.kind == "exponential":
        G = probe.bandwidth
        a = math.sqrt(probe.nbar * G)
        jr, jl = probe.jones

        def beta_r(t, c=a * jr):
            return c * math.exp(-G * t / 2)

        def beta_l(t, c=a * jl):
            return c * math.exp(-G * t / 2)

        model = driven_model(beta_r, beta_l, emitter, spin=spin, t_floor=t_end)
    else:
        model = spi_model(probe, emitter, spin)
    return model.run(t_eval=t_grid, t_max=t_end, stop=False, rtol=rtol, atol=atol)


def _moments(traj: Trajectory, steps: bool):
    obs = traj.step_observables if steps else traj.observables
    t = traj.step_times if steps else traj.times
    return t, obs["out_rr"].real, obs["out_ll"].real, obs["out_rl"]


def intensities(traj: Trajectory, steps: bool = False) -> dict:
    """Photon flux in each of the six polarisation modes plus the total."""
    t, nrr, nll, nrl = _moments(traj, steps)
    out = {"t": t, "total": nrr + nll}
    for name, (pr, pl) in MODE_ROWS.items():
        # <(p.L)^dag (p.L)> = |p_R|^2 n_RR + |p_L|^2 n_LL + 2 Re(conj(p_R) p_L <L_R^dag L_L>)
        out[name] = (abs(pr) ** 2 * nrr + abs(pl) ** 2 * nll
                     + 2 * (np.conj(pr) * pl * nrl).real)
    return out


def stokes_trajectory(traj: Trajectory, spin: str | None = None, *, steps: bool = False,
                      intensity_floor: float = INTENSITY_FLOOR) -> list[StokesSample]:
    """Instantaneous normalised Stokes vectors of the output light; dim samples are skipped."""
    t, nrr, nll, nrl = _moments(traj, steps)
    total = nrr + nll
    out = []
    for k in range(len(t)):
        if not total[k] > intensity_floor:
            continue
        ex = 2 * nrl[k].real / total[k]
        ey = 2 * nrl[k].imag / total[k]
        ez = (nrr[k] - nll[k]) / total[k]
        theta, phi = _angles(ex, ey, ez)
        out.append(StokesSample(float(t[k]), float(ex), float(ey), float(ez), theta, phi, float(total[k])))
    return out


def conditional_amplitude(traj: Trajectory, spin: str, t: float,
                          intensity_floor: float = INTENSITY_FLOOR) -> complex:
    """Mean field projected on the instantaneous polarisation at time ``t``.

    <b(t)> = cos(theta/2) <L_R> + exp(-i phi) sin(theta/2) <L_L>, with the angles
    taken from the Stokes vector at the same time (linear interpolation between samples).
    """
    if spin not in ("up", "down"):
        raise ValueError("spin must be 'up' or 'down'")
    times = traj.times
    if not times[0] <= t <= times[-1]:
        raise ValueError("time outside the sampled window")

    def interp(arr):
        return np.interp(t, times, arr.real) + 1j * np.interp(t, times, arr.imag)

    obs = traj.observables
    ar, al = interp(obs["out_r"]), interp(obs["out_l"])
    nrr, nll, nrl = interp(obs["out_rr"]).real, interp(obs["out_ll"]).real, interp(obs["out_rl"])
    total = nrr + nll
    if abs(ar) == 0 and abs(al) == 0:
        return 0j
    if not total > intensity_floor:
        raise ValueError("no light at this time: polarisation undefined")
    theta, phi = _angles(2 * nrl.real / total, 2 * nrl.imag / total, (nrr - nll) / total)
    return complex(math.cos(theta / 2) * ar + np.exp(-1j * phi) * math.sin(theta / 2) * al)


def write_stokes_csv(path, branches: dict) -> None:
    """CSV with one block of rows per spin branch."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["spin", "t", "eps_x", "eps_y", "eps_z", "theta", "phi", "intensity"])
        for spin, samples in branches.items():
            for s in samples:
                w.writerow([spin, repr(s.t), repr(s.eps_x), repr(s.eps_y), repr(s.eps_z),
                            repr(s.theta), repr(s.phi), repr(s.intensity)])
