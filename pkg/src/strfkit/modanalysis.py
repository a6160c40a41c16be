"""Population descriptors of a learned filter set on the modulation plane.

Works on canonicalized ModulationPoints (Omega >= 0): sweep-asymmetry
and low-pass fractions, the "starriness" of the off-low-box mass, KDE +
SVD separability of the (omega, Omega) density, and percentile bootstrap
confidence intervals for any of these.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .defaults import DELTA_F_CPO, DELTA_T_HZ, KDE_GRID_SIZE, N_BOOTSTRAP
from .errors import DegenerateDistribution, InvalidConfig, InvalidInput
from .gaborkit import ModulationPoint
from .parallel import n_threads


def _check_points(points: Sequence[ModulationPoint]) -> None:
    if len(points) == 0:
        raise InvalidInput("point list is empty")
    if any(m.Omega < 0 for m in points):
        raise InvalidInput("points must be canonicalized (Omega >= 0) first")


def _omegas(points) -> np.ndarray:
    return np.array([m.omega for m in points])


def _Omegas(points) -> np.ndarray:
    return np.array([m.Omega for m in points])


def alpha_asymmetry(points: Sequence[ModulationPoint]) -> tuple[float, float]:
    """Up-sweep fraction |{omega > 0}| / N and its centered variant 2f-1.

    The literal fraction is 0.5 for a sign-symmetric population; the
    centered variant is 0 there. Both are reported because published
    summaries are ambiguous about which convention they use.
    """
    _check_points(points)
    fraction = float((_omegas(points) > 0).mean())
    return fraction, 2.0 * fraction - 1.0


def box_counts(
    points: Sequence[ModulationPoint],
    delta_t: float = DELTA_T_HZ,
    delta_f: float = DELTA_F_CPO,
) -> dict:
    """Strict-inequality memberships of the low box and the axis strips."""
    _check_points(points)
    if delta_t <= 0 or delta_f <= 0:
        raise InvalidConfig("thresholds must be positive")
    omega = np.abs(_omegas(points))
    Omega = _Omegas(points)
    in_dt = omega < delta_t
    in_df = Omega < delta_f
    return {
        "N": len(points),
        "N_low": int((in_dt & in_df).sum()),
        "N_delta_t": int(in_dt.sum()),
        "N_delta_f": int(in_df.sum()),
    }


def alpha_low(
    points: Sequence[ModulationPoint],
    delta_t: float = DELTA_T_HZ,
    delta_f: float = DELTA_F_CPO,
) -> float:
    """Fraction inside the joint low-modulation box |omega|<dt, Omega<df."""
    c = box_counts(points, delta_t, delta_f)
    return c["N_low"] / c["N"]


def alpha_star(
    points: Sequence[ModulationPoint],
    delta_t: float = DELTA_T_HZ,
    delta_f: float = DELTA_F_CPO,
) -> float:
    """Fraction of off-low-box mass lying in either axis strip."""
    c = box_counts(points, delta_t, delta_f)
    if c["N"] == c["N_low"]:
        raise DegenerateDistribution(
            "all points sit in the low box; starriness is undefined"
        )
    return (c["N_delta_t"] + c["N_delta_f"] - 2 * c["N_low"]) / (c["N"] - c["N_low"])


@dataclass(frozen=True)
class DensityGrid:
    """KDE of the point cloud on an (omega, Omega) lattice, sum-normalized."""

    values: np.ndarray  # [len(omega_axis), len(Omega_axis)]
    omega_axis: np.ndarray
    Omega_axis: np.ndarray
    bandwidths: tuple[float, float]


def kde_density(
    points: Sequence[ModulationPoint],
    omega_max: float | None = None,
    Omega_max: float | None = None,
    grid_size: int = KDE_GRID_SIZE,
) -> DensityGrid:
    """Gaussian-product KDE on [-omega_max, omega_max] x [0, Omega_max].

    Bandwidths follow Scott's rule per axis (sigma * n^(-1/6)); when an
    axis has zero spread the bandwidth falls back to one lattice cell.
    Pass the Nyquist bounds of the filter bank as the lattice extents;
    they default to 110% of the data range.
    """
    _check_points(points)
    omega = _omegas(points)
    Omega = _Omegas(points)
    pts = np.stack([omega, Omega], axis=1)
    if len(np.unique(pts, axis=0)) < 2:
        raise DegenerateDistribution("KDE needs at least 2 distinct points")
    if omega_max is None:
        omega_max = 1.1 * max(np.abs(omega).max(), 1e-6)
    if Omega_max is None:
        Omega_max = 1.1 * max(Omega.max(), 1e-6)
    omega_axis = np.linspace(-omega_max, omega_max, grid_size)
    Omega_axis = np.linspace(0.0, Omega_max, grid_size)
    factor = len(points) ** (-1.0 / 6.0)  # Scott, d=2
    h = []
    for values, axis in ((omega, omega_axis), (Omega, Omega_axis)):
        bw = values.std() * factor
        if bw <= 0:
            bw = max(axis[1] - axis[0], 1e-9)
        h.append(bw)
    gauss_o = np.exp(-0.5 * ((omega_axis[:, None] - omega[None, :]) / h[0]) ** 2)
    gauss_O = np.exp(-0.5 * ((Omega_axis[:, None] - Omega[None, :]) / h[1]) ** 2)
    density = gauss_o @ gauss_O.T  # sum over points of the product kernels
    total = density.sum()
    if total <= 0:
        raise DegenerateDistribution("density mass vanished on the lattice")
    return DensityGrid(
        values=density / total,
        omega_axis=omega_axis,
        Omega_axis=Omega_axis,
        bandwidths=(h[0], h[1]),
    )


def alpha_separability(d: DensityGrid) -> float:
    """First singular value of the density over the sum of all of them."""
    values = np.asarray(d.values if isinstance(d, DensityGrid) else d, dtype=float)
    if not values.any():
        raise DegenerateDistribution("zero density matrix")
    lam = np.linalg.svd(values, compute_uv=False)
    return float(lam[0] / lam.sum())


@dataclass(frozen=True)
class BootstrapResult:
    point_estimate: float
    ci_low: float
    ci_high: float
    n_valid: int
    n_boot: int

    def as_tuple(self) -> tuple[float, float, float]:
        return self.point_estimate, self.ci_low, self.ci_high


def bootstrap_ci(
    points: Sequence[ModulationPoint],
    statistic: Callable[[list[ModulationPoint]], float],
    n_boot: int = N_BOOTSTRAP,
    seed: int = 0,
) -> BootstrapResult:
    """Percentile (2.5/97.5) bootstrap of a population statistic.

    Replicates resample the points with replacement; each replicate's
    indices come from a child seed spawned deterministically from the
    master seed, so results do not depend on scheduling. Replicates on
    which the statistic is undefined (DegenerateDistribution) are
    dropped and counted out of n_valid.
    """
    _check_points(points)
    point = float(statistic(list(points)))
    n = len(points)
    seeds = np.random.SeedSequence(seed).spawn(n_boot)

    def one(child) -> float | None:
        rng = np.random.default_rng(child)
        idx = rng.integers(0, n, size=n)
        try:
            return float(statistic([points[i] for i in idx]))
        except DegenerateDistribution:
            return None

    workers = n_threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(one, seeds))
    else:
        raw = [one(s) for s in seeds]
    values = [v for v in raw if v is not None]
    if not values:
        raise DegenerateDistribution("statistic undefined on every replicate")
    lo, hi = np.percentile(values, [2.5, 97.5])
    return BootstrapResult(point, float(lo), float(hi), len(values), n_boot)


@dataclass(frozen=True)
class PopulationStats:
    """Everything the analyze command reports for one filter population."""

    alpha_asymmetry: float
    alpha_asymmetry_centered: float
    alpha_low: float
    alpha_star: float | None
    alpha_sep: float | None
    alpha_star_reason: str | None
    alpha_sep_reason: str | None
    counts: dict
    delta_t: float
    delta_f: float
    bootstrap: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "alpha_asymmetry": self.alpha_asymmetry,
            "alpha_asymmetry_centered": self.alpha_asymmetry_centered,
            "alpha_low": self.alpha_low,
            "alpha_star": self.alpha_star,
            "alpha_star_reason": self.alpha_star_reason,
            "alpha_sep": self.alpha_sep,
            "alpha_sep_reason": self.alpha_sep_reason,
            "counts": self.counts,
            "thresholds": {"delta_t_hz": self.delta_t, "delta_f_cpo": self.delta_f},
            "bootstrap": self.bootstrap,
        }


def population_stats(
    points: Sequence[ModulationPoint],
    delta_t: float = DELTA_T_HZ,
    delta_f: float = DELTA_F_CPO,
    n_boot: int = N_BOOTSTRAP,
    seed: int = 0,
    omega_max: float | None = None,
    Omega_max: float | None = None,
) -> PopulationStats:
    """Compute all descriptors plus bootstrap CIs in one pass.

    Statistics that are undefined for the population (starriness with
    everything in the low box, separability with < 2 distinct points)
    come back as None with a reason instead of raising.
    """
    _check_points(points)
    fraction, centered = alpha_asymmetry(points)
    counts = box_counts(points, delta_t, delta_f)
    a_low = counts["N_low"] / counts["N"]

    def sep_statistic(pts):
        return alpha_separability(kde_density(pts, omega_max, Omega_max))

    named = {
        "alpha_asymmetry": lambda pts: alpha_asymmetry(pts)[0],
        "alpha_asymmetry_centered": lambda pts: alpha_asymmetry(pts)[1],
        "alpha_low": lambda pts: alpha_low(pts, delta_t, delta_f),
        "alpha_star": lambda pts: alpha_star(pts, delta_t, delta_f),
        "alpha_sep": sep_statistic,
    }
    values: dict[str, float | None] = {}
    reasons: dict[str, str | None] = {"alpha_star": None, "alpha_sep": None}
    boot: dict[str, dict] = {}
    for name, stat in named.items():
        try:
            values[name] = float(stat(list(points)))
        except DegenerateDistribution as exc:
            values[name] = None
            reasons[name] = str(exc)
            continue
        res = bootstrap_ci(points, stat, n_boot=n_boot, seed=seed)
        boot[name] = {
            "point_estimate": res.point_estimate,
            "ci_low": res.ci_low,
            "ci_high": res.ci_high,
            "n_valid": res.n_valid,
            "n_boot": res.n_boot,
        }
    return PopulationStats(
        alpha_asymmetry=fraction,
        alpha_asymmetry_centered=centered,
        alpha_low=a_low,
        alpha_star=values["alpha_star"],
        alpha_sep=values["alpha_sep"],
        alpha_star_reason=reasons["alpha_star"],
        alpha_sep_reason=reasons["alpha_sep"],
        counts=counts,
        delta_t=delta_t,
        delta_f=delta_f,
        bootstrap=boot,
    )
