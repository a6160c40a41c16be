"""Complex 2-D Gabor kernels parameterized by (sigma_t, sigma_f, F, gamma).

A kernel is a 2-D Gaussian envelope times a complex plane-wave carrier,
evaluated on an integer grid of (time, channel) offsets centered at zero.
All physical units (Hz, cycles/octave) enter only through explicit
conversion rates when mapping to the modulation plane.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .defaults import F_MAX_CYC, GRID_N_FREQ, GRID_N_TIME, SIGMA_MIN
from .errors import InvalidConfig, InvalidInput

PARAM_NAMES = ("sigma_t", "sigma_f", "F", "gamma")


@dataclass(frozen=True)
class GaborParams:
    """The four learnable polar parameters of one filter.

    sigma_t : time spread in frames, sigma_f : channel spread in channels
    (both clamped up to SIGMA_MIN so the 1/(2*pi*sigma_t*sigma_f)
    normalizer stays bounded), F : modulation magnitude in cycles per
    grid unit, gamma : orientation in radians.
    """

    sigma_t: float
    sigma_f: float
    F: float
    gamma: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidInput(f"{name} must be finite, got {v!r}")
        if self.sigma_t <= 0 or self.sigma_f <= 0:
            raise InvalidInput(
                f"sigma spreads must be positive, got "
                f"({self.sigma_t}, {self.sigma_f})"
            )
        if self.F < 0:
            raise InvalidInput(f"F must be nonnegative, got {self.F}")
        if self.F > F_MAX_CYC * (1 + 1e-9):
            raise InvalidInput(
                f"F={self.F} exceeds the orientation-reachable Nyquist "
                f"{F_MAX_CYC:.6f}"
            )
        object.__setattr__(self, "sigma_t", max(self.sigma_t, SIGMA_MIN))
        object.__setattr__(self, "sigma_f", max(self.sigma_f, SIGMA_MIN))

    def as_vector(self) -> np.ndarray:
        return np.array([self.sigma_t, self.sigma_f, self.F, self.gamma])

    @classmethod
    def from_vector(cls, vec) -> "GaborParams":
        st, sf, F, gamma = (float(v) for v in vec)
        return cls(st, sf, F, gamma)


@dataclass(frozen=True)
class KernelGrid:
    """Integer (time, channel) offsets on which kernels are sampled.

    Both extents are odd so (0, 0) is a grid point and the envelope
    peak sits on a sample.
    """

    n_time: int = GRID_N_TIME
    n_freq: int = GRID_N_FREQ

    def __post_init__(self):
        if self.n_time < 1 or self.n_freq < 1:
            raise InvalidConfig("grid extents must be positive")
        if self.n_time % 2 == 0 or self.n_freq % 2 == 0:
            raise InvalidConfig(
                f"grid extents must be odd, got {self.n_time}x{self.n_freq}"
            )

    @property
    def t_coords(self) -> np.ndarray:
        return np.arange(self.n_time) - self.n_time // 2

    @property
    def f_coords(self) -> np.ndarray:
        return np.arange(self.n_freq) - self.n_freq // 2

    @property
    def half_time(self) -> int:
        return self.n_time // 2

    @property
    def half_freq(self) -> int:
        return self.n_freq // 2


@dataclass(frozen=True)
class ModulationPoint:
    """One filter in Cartesian modulation coordinates.

    omega is the temporal modulation in Hz (sign encodes sweep
    direction once Omega >= 0), Omega the spectral modulation in
    cycles/octave, and the sigma spreads are in seconds and octaves.
    """

    omega: float
    Omega: float
    sigma_t_s: float
    sigma_f_oct: float

    def as_vector(self) -> np.ndarray:
        """Coordinates ordered (sigma_t_s, sigma_f_oct, omega, Omega)."""
        return np.array([self.sigma_t_s, self.sigma_f_oct, self.omega, self.Omega])


class KernelGradients(NamedTuple):
    """Elementwise partials of the kernel, one matrix per parameter."""

    sigma_t: np.ndarray
    sigma_f: np.ndarray
    F: np.ndarray
    gamma: np.ndarray


def _envelope_and_carrier(p: GaborParams, grid: KernelGrid):
    tt = grid.t_coords.astype(float)
    ff = grid.f_coords.astype(float)
    norm = 1.0 / (2.0 * np.pi * p.sigma_t * p.sigma_f)
    env = norm * np.exp(
        -0.5 * (ff[:, None] ** 2 / p.sigma_f**2 + tt[None, :] ** 2 / p.sigma_t**2)
    )
    rot = tt[None, :] * np.cos(p.gamma) + ff[:, None] * np.sin(p.gamma)
    carrier = np.exp(1j * 2.0 * np.pi * p.F * rot)
    return env, carrier, rot


def gabor_kernel(p: GaborParams, grid: KernelGrid = KernelGrid()) -> np.ndarray:
    """Synthesize one complex kernel, shape [n_freq, n_time].

    Entry [f, t] is (2*pi*sigma_t*sigma_f)^-1 *
    exp(-(t^2/sigma_t^2 + f^2/sigma_f^2)/2) *
    exp(j*2*pi*F*(t*cos(gamma) + f*sin(gamma))) at the grid offsets.
    """
    env, carrier, _ = _envelope_and_carrier(p, grid)
    return env * carrier


def gabor_gradients(
    p: GaborParams, grid: KernelGrid = KernelGrid()
) -> KernelGradients:
    """Analytic partial derivatives of gabor_kernel w.r.t. each parameter."""
    env, carrier, rot = _envelope_and_carrier(p, grid)
    k = env * carrier
    tt = grid.t_coords.astype(float)
    ff = grid.f_coords.astype(float)
    d_sigma_t = k * (tt[None, :] ** 2 / p.sigma_t**3 - 1.0 / p.sigma_t)
    d_sigma_f = k * (ff[:, None] ** 2 / p.sigma_f**3 - 1.0 / p.sigma_f)
    d_F = k * (1j * 2.0 * np.pi * rot)
    rot_orth = -tt[None, :] * np.sin(p.gamma) + ff[:, None] * np.cos(p.gamma)
    d_gamma = k * (1j * 2.0 * np.pi * p.F * rot_orth)
    return KernelGradients(d_sigma_t, d_sigma_f, d_F, d_gamma)


def to_cartesian(
    p: GaborParams, frame_rate: float, channels_per_octave: float
) -> ModulationPoint:
    """Convert polar grid-unit parameters to physical modulation coordinates.

    omega = F*cos(gamma)*frame_rate in Hz, Omega = F*sin(gamma)*
    channels_per_octave in cycles/octave; the sigma spreads divide by
    the same rates (frames -> seconds, channels -> octaves).
    """
    if frame_rate <= 0 or channels_per_octave <= 0:
        raise InvalidConfig(
            f"conversion rates must be positive, got "
            f"({frame_rate}, {channels_per_octave})"
        )
    return ModulationPoint(
        omega=float(p.F * np.cos(p.gamma) * frame_rate),
        Omega=float(p.F * np.sin(p.gamma) * channels_per_octave),
        sigma_t_s=float(p.sigma_t / frame_rate),
        sigma_f_oct=float(p.sigma_f / channels_per_octave),
    )


def from_cartesian(
    omega: float,
    Omega: float,
    sigma_t_s: float,
    sigma_f_oct: float,
    frame_rate: float,
    channels_per_octave: float,
) -> GaborParams:
    """Inverse of to_cartesian; used to seed filters from modulation targets."""
    if frame_rate <= 0 or channels_per_octave <= 0:
        raise InvalidConfig("conversion rates must be positive")
    f_t = omega / frame_rate
    f_f = Omega / channels_per_octave
    F = math.hypot(f_t, f_f)
    gamma = math.atan2(f_f, f_t) if F > 0 else 0.0
    return GaborParams(
        sigma_t=sigma_t_s * frame_rate,
        sigma_f=sigma_f_oct * channels_per_octave,
        F=F,
        gamma=gamma,
    )


def canonicalize(m: ModulationPoint) -> ModulationPoint:
    """Map to the Omega >= 0 half plane by flipping both modulation signs."""
    if m.Omega < 0:
        return replace(m, omega=-m.omega, Omega=-m.Omega)
    return m


@dataclass(frozen=True)
class FilterBank:
    """A filter population plus everything needed to interpret it physically."""

    filters: tuple
    grid: KernelGrid
    frame_rate: float
    channels_per_octave: float

    def __post_init__(self):
        if len(self.filters) == 0:
            raise InvalidInput("a filter bank needs at least one filter")
        object.__setattr__(self, "filters", tuple(self.filters))

    def __len__(self) -> int:
        return len(self.filters)

    def kernels(self) -> np.ndarray:
        """Stacked complex kernels, shape [N, n_freq, n_time]."""
        return np.stack([gabor_kernel(p, self.grid) for p in self.filters])

    def modulation_points(self, canonical: bool = True) -> list[ModulationPoint]:
        pts = [
            to_cartesian(p, self.frame_rate, self.channels_per_octave)
            for p in self.filters
        ]
        if canonical:
            pts = [canonicalize(m) for m in pts]
        return pts


BANK_SCHEMA_VERSION = 1


def bank_to_dict(bank: FilterBank) -> dict:
    return {
        "schema_version": BANK_SCHEMA_VERSION,
        "grid": {"n_time": bank.grid.n_time, "n_freq": bank.grid.n_freq},
        "frame_rate": bank.frame_rate,
        "channels_per_octave": bank.channels_per_octave,
        "filters": [
            {
                "sigma_t": p.sigma_t,
                "sigma_f": p.sigma_f,
                "F": p.F,
                "gamma": p.gamma,
            }
            for p in bank.filters
        ],
    }


def bank_from_dict(doc: dict) -> FilterBank:
    try:
        grid = KernelGrid(
            n_time=int(doc["grid"]["n_time"]), n_freq=int(doc["grid"]["n_freq"])
        )
        filters = tuple(
            GaborParams(
                sigma_t=float(d["sigma_t"]),
                sigma_f=float(d["sigma_f"]),
                F=float(d["F"]),
                gamma=float(d["gamma"]),
            )
            for d in doc["filters"]
        )
        return FilterBank(
            filters=filters,
            grid=grid,
            frame_rate=float(doc["frame_rate"]),
            channels_per_octave=float(doc["channels_per_octave"]),
        )
    except KeyError as exc:
        raise InvalidInput(f"bank document missing field {exc}") from exc


def save_bank(bank: FilterBank, path, extra: dict | None = None) -> None:
    """Write the interchange JSON for a bank; `extra` merges at top level."""
    doc = bank_to_dict(bank)
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_bank(path) -> FilterBank:
    with open(path) as fh:
        return bank_from_dict(json.load(fh))
