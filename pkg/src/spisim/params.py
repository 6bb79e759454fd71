"""Parameter containers shared across modules.

Rates are in units of the emitter decay rate unless stated otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analytic import PhotonEnvelope

# Jones vectors in the circular (R, L) basis
POLARIZATIONS = {
    "R": (1.0, 0.0),
    "L": (0.0, 1.0),
    "H": (1 / math.sqrt(2), 1 / math.sqrt(2)),
    "V": (1j / math.sqrt(2), -1j / math.sqrt(2)),
    "D": (np.exp(-1j * math.pi / 4) / math.sqrt(2), np.exp(1j * math.pi / 4) / math.sqrt(2)),
    "A": (np.exp(1j * math.pi / 4) / math.sqrt(2), np.exp(-1j * math.pi / 4) / math.sqrt(2)),
}


@dataclass(frozen=True)
class EmitterParams:
    gamma: float = 1.0
    gamma_star: float = 0.0
    eta: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        ImperfectionParams(self.gamma_star, self.eta)

    @property
    def imperfections(self) -> "ImperfectionParams":
        return ImperfectionParams(self.gamma_star, self.eta)


@dataclass(frozen=True)
class ImperfectionParams:
    gamma_star: float = 0.0
    eta: float = 1.0

    def __post_init__(self):
        if self.gamma_star < 0:
            raise ValueError(f"dephasing rate must be non-negative, got {self.gamma_star}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {self.eta}")


@dataclass(frozen=True, eq=False)
class ProbeState:
    """Input light pulse: a coherent state or a zero/one-photon superposition.

    ``polarization`` is a key of ``POLARIZATIONS``; pointer-state analyses use H.
    """

    statistics: str
    nbar: float
    envelope: PhotonEnvelope
    c0: complex | None = None
    c1: complex | None = None
    polarization: str = "H"
    jones: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.statistics not in ("coherent", "superposition"):
            raise ValueError(f"unknown probe statistics {self.statistics!r}")
        if self.nbar < 0 or not np.isfinite(self.nbar):
            raise ValueError(f"mean photon number must be finite and non-negative, got {self.nbar}")
        if self.polarization not in POLARIZATIONS:
            raise ValueError(f"unknown polarization {self.polarization!r}")
        if self.statistics == "superposition":
            if self.nbar > 1:
                raise ValueError(f"superposition probes need nbar in [0, 1], got {self.nbar}")
            c0, c1 = self.c0, self.c1
            if c0 is None and c1 is None:
                c0, c1 = math.sqrt(1 - self.nbar), math.sqrt(self.nbar)
            elif c0 is None or c1 is None:
                raise ValueError("give both c0 and c1 or neither")
            if abs(abs(c0) ** 2 + abs(c1) ** 2 - 1) > 1e-12:
                raise ValueError("superposition amplitudes are not normalised")
            if abs(abs(c1) ** 2 - self.nbar) > 1e-12:
                raise ValueError("nbar must equal |c1|**2")
            object.__setattr__(self, "c0", complex(c0))
            object.__setattr__(self, "c1", complex(c1))
        object.__setattr__(self, "jones", POLARIZATIONS[self.polarization])

    @classmethod
    def single_photon(cls, nbar: float, bandwidth: float, polarization: str = "H"):
        return cls("superposition", nbar, PhotonEnvelope.exponential(bandwidth), polarization=polarization)

    @classmethod
    def coherent(cls, nbar: float, bandwidth: float, polarization: str = "H"):
        return cls("coherent", nbar, PhotonEnvelope.exponential(bandwidth), polarization=polarization)

    @property
    def bandwidth(self) -> float | None:
        return self.envelope.bandwidth

    def with_polarization(self, polarization: str) -> "ProbeState":
        return ProbeState(self.statistics, self.nbar, self.envelope,
                          self.c0 if self.statistics == "superposition" else None,
                          self.c1 if self.statistics == "superposition" else None,
                          polarization)


BHAT_METHODS = ("analytic-square", "analytic-exponential", "overlap-quadrature", "numeric-slh", "classical")


@dataclass(frozen=True)
class BhatResult:
    """Bhattacharyya coefficient with provenance.

    ``converged`` is False when a numeric run hit its time limit before the
    long-time criterion, or when an analytic value was requested outside its
    long-time regime.
    """

    value: float
    method: str
    params: dict = field(default_factory=dict)
    error_estimate: float = 0.0
    converged: bool = True
    time: float | None = None

    def __post_init__(self):
        if self.method not in BHAT_METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not (-1e-9 <= self.value <= 1 + 1e-9):
            raise ValueError(f"Bhattacharyya coefficient {self.value} outside [0, 1]")
        object.__setattr__(self, "value", float(min(max(self.value, 0.0), 1.0)))

    def __float__(self):
        return self.value
