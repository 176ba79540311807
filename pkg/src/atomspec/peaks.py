"""Peak extraction from spectrum traces by topographic prominence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .qrt import SpectrumTrace

__all__ = ["Peak", "PeakList", "find_peaks", "local_maxima", "top_peaks"]

DEFAULT_PROMINENCE_FRAC = 0.05


@dataclass(frozen=True)
class Peak:
    omega: float
    intensity: float
    prominence: float


@dataclass(frozen=True)
class PeakList:
    peaks: tuple[Peak, ...]

    def __post_init__(self):
        if any(p.prominence <= 0 for p in self.peaks):
            raise ValueError("peak prominences must be positive")
        omegas = [p.omega for p in self.peaks]
        if omegas != sorted(omegas):
            raise ValueError("peaks must be sorted by omega")
        object.__setattr__(self, "peaks", tuple(self.peaks))

    def __len__(self) -> int:
        return len(self.peaks)

    def __iter__(self):
        return iter(self.peaks)

    @property
    def omegas(self) -> np.ndarray:
        return np.array([p.omega for p in self.peaks])


def find_peaks(trace: SpectrumTrace, min_prominence_frac: float = DEFAULT_PROMINENCE_FRAC) -> PeakList:
    """Local maxima whose topographic prominence reaches the given
    fraction of the trace maximum."""
    y = trace.intensities
    if y.size == 0:
        raise ValueError("empty trace")
    top = float(y.max())
    if top <= 0:
        return PeakList(())
    idx, props = signal.find_peaks(y, prominence=min_prominence_frac * top)
    return PeakList(
        tuple(
            Peak(float(trace.omegas[i]), float(y[i]), float(pr))
            for i, pr in zip(idx, props["prominences"])
        )
    )


def local_maxima(trace: SpectrumTrace) -> np.ndarray:
    """Positions of every interior local maximum, prominence-free."""
    idx, _ = signal.find_peaks(trace.intensities)
    return trace.omegas[idx]


def top_peaks(trace: SpectrumTrace, n: int) -> PeakList:
    """The n most prominent local maxima, sorted by omega."""
    y = trace.intensities
    idx, props = signal.find_peaks(y, prominence=0.0)
    keep = props["prominences"] > 0
    idx, proms = idx[keep], props["prominences"][keep]
    order = np.argsort(proms)[::-1][:n]
    chosen = np.sort(idx[order])
    prom = {i: p for i, p in zip(idx, proms)}
    return PeakList(
        tuple(Peak(float(trace.omegas[i]), float(y[i]), float(prom[i])) for i in chosen)
    )
