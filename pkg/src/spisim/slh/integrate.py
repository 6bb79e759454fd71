"""Adaptive Dormand-Prince propagation of density matrices.

The stepping itself is scipy's RK45 (Dormand-Prince 5(4) with FSAL and
quartic dense output); this module drives it step by step so that every
accepted state can be re-symmetrised, monitored for Fock truncation and
checked against a user stop criterion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.integrate import RK45

from .liouvillian import Liouvillian, expectation_vector
from .operators import Op

RTOL = 1e-9
ATOL = 1e-11
TRUNCATION_TOL = 1e-6


class IntegrationError(RuntimeError):
    pass


class TruncationError(IntegrationError):
    def __init__(self, t: float, tail: float):
        super().__init__(f"Fock truncation tail {tail:.3e} exceeds {TRUNCATION_TOL:g} at t={t:.6g}; "
                         "increase the cutoff")
        self.t = t
        self.tail = tail


class _Observable:
    """Tr(O(t) rho) for a possibly time-dependent operator."""

    def __init__(self, op):
        if isinstance(op, Op):
            self.parts = [(t.coef, expectation_vector(t.mat)) for t in op.simplify().terms]
        else:
            self.parts = [(None, expectation_vector(sp.csr_matrix(op)))]

    def __call__(self, t: float, y: np.ndarray) -> complex:
        val = 0j
        for c, w in self.parts:
            v = complex((w @ y)[0])
            val += v if c is None else c(t) * v
        return val


@dataclass
class Trajectory:
    """Result of ``integrate``: sampled observables, step history and final state."""

    times: np.ndarray
    observables: dict
    step_times: np.ndarray
    step_observables: dict
    final_state: np.ndarray
    final_time: float
    converged: bool
    n_steps: int
    initial_trace: float
    max_truncation_tail: float
    states: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.final_state.shape[0]

    @property
    def final_trace(self) -> float:
        return float(np.trace(self.final_state).real)

    def observable(self, name: str, steps: bool = False) -> np.ndarray:
        return (self.step_observables if steps else self.observables)[name]


def hermitize(y: np.ndarray, dim: int) -> np.ndarray:
    m = y.reshape(dim, dim)
    return (0.5 * (m + m.conj().T)).reshape(-1)


def integrate(liou: Liouvillian, rho0: np.ndarray, t_end: float, *,
              t_eval=None, observables: Mapping[str, object] | None = None,
              stop: Callable[[float, dict], bool] | None = None,
              breakpoints=(), store_states_at=(), truncation_projectors=(),
              rtol: float = RTOL, atol: float = ATOL, max_step: float = math.inf,
              t0: float = 0.0) -> Trajectory:
    """Propagate ``rho0`` under ``liou`` from ``t0`` to ``t_end`` (or until ``stop`` fires).

    ``stop(t, values)`` receives the observables at each accepted step.  Samples
    in ``t_eval`` come from the dense interpolant; ``store_states_at`` keeps full
    density matrices at the listed times.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    dim = rho0.shape[0]
    if rho0.shape != (dim, dim) or dim != liou.dim:
        raise ValueError(f"initial state shape {rho0.shape} does not match generator dimension {liou.dim}")
    if np.abs(rho0 - rho0.conj().T).max() > 1e-10:
        raise ValueError("initial state is not Hermitian")
    if not t_end > t0:
        raise ValueError("t_end must exceed the start time")
    observables = dict(observables or {})
    obs = {k: _Observable(v) for k, v in observables.items()}
    tails = [expectation_vector(p) for p in truncation_projectors]

    t_eval = np.array([], float) if t_eval is None else np.asarray(t_eval, float)
    if t_eval.size and (np.any(np.diff(t_eval) < 0) or t_eval[0] < t0):
        raise ValueError("t_eval must be sorted and start at or after t0")
    t_eval = t_eval[t_eval <= t_end]
    store_at = sorted(float(s) for s in store_states_at if t0 <= s <= t_end)

    sample_vals = {k: np.full(t_eval.size, np.nan + 0j) for k in obs}
    step_t = [t0]
    y = rho0.reshape(-1).copy()
    step_vals = {k: [f(t0, y)] for k, f in obs.items()}
    states = {}
    max_tail = max((float((w @ y)[0].real) for w in tails), default=0.0)
    if max_tail > TRUNCATION_TOL:
        raise TruncationError(t0, max_tail)

    # fill samples sitting exactly at t0
    next_sample = 0
    while next_sample < t_eval.size and t_eval[next_sample] <= t0:
        for k, f in obs.items():
            sample_vals[k][next_sample] = f(t0, y)
        next_sample += 1
    while store_at and store_at[0] <= t0:
        states[store_at.pop(0)] = y.reshape(dim, dim).copy()

    segments = sorted({t0, t_end, *[b for b in breakpoints if t0 < b < t_end]})
    n_steps = 0
    converged = False
    t = t0
    for seg_start, seg_end in zip(segments[:-1], segments[1:]):
        solver = RK45(liou, seg_start, y, seg_end, rtol=rtol, atol=atol, max_step=max_step)
        while solver.status == "running":
            msg = solver.step()
            if solver.status == "failed":
                raise IntegrationError(f"step size underflow at t={solver.t:.6g}: {msg}")
            n_steps += 1
            t = solver.t
            needs_dense = ((next_sample < t_eval.size and t_eval[next_sample] <= t)
                           or (store_at and store_at[0] <= t))
            if needs_dense:
                dense = solver.dense_output()
                while next_sample < t_eval.size and t_eval[next_sample] <= t:
                    ts = t_eval[next_sample]
                    ys = hermitize(dense(ts), dim)
                    for k, f in obs.items():
                        sample_vals[k][next_sample] = f(ts, ys)
                    next_sample += 1
                while store_at and store_at[0] <= t:
                    ts = store_at.pop(0)
                    states[ts] = hermitize(dense(ts), dim).reshape(dim, dim)
            y = hermitize(solver.y, dim)
            solver.y = y
            for w in tails:
                tail = float((w @ y)[0].real)
                max_tail = max(max_tail, tail)
                if tail > TRUNCATION_TOL:
                    raise TruncationError(t, tail)
            values = {k: f(t, y) for k, f in obs.items()}
            step_t.append(t)
            for k, v in values.items():
                step_vals[k].append(v)
            if stop is not None and stop(t, values):
                converged = True
                break
        if converged:
            break

    keep = t_eval <= t
    return Trajectory(
        times=t_eval[keep],
        observables={k: v[keep] for k, v in sample_vals.items()},
        step_times=np.asarray(step_t),
        step_observables={k: np.asarray(v) for k, v in step_vals.items()},
        final_state=y.reshape(dim, dim),
        final_time=t,
        converged=converged,
        n_steps=n_steps,
        initial_trace=float(np.trace(rho0).real),
        max_truncation_tail=max_tail,
        states=states,
    )
