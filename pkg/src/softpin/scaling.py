"""Weak-coupling harness: scaled couplings, N-ladders, and continuum gaps.

Sending (beta, h) to zero along N-dependent power laws puts the pinning
model in a window where N times the annealed free energy converges to a
continuum functional of the reflected Bessel-like diffusion.  The decay
exponents (A, B) in

    beta_N = beta_hat * N^(-A),    h_N = h_hat * N^(-B)

depend on which of the potential tail and the walk's return exponent wins:

    long_range     (A, B) = ((1-theta)/2, (2-theta)/2)
    intermediate   (A, B) = (alpha/2,     (2-theta)/2)
    short_range    (A, B) = (alpha/2,     alpha)

This module builds those schedules, evaluates N * F_ann(beta_N, h_N) along
a ladder of system sizes (free energy by the renewal-root method on the
excursion weights, whose finite-size error decays much faster than the
partition-ladder estimate at weak coupling), and computes the discrete
expansion coefficients

    C_{TN,k} = sum_{n_1 < ... < n_k <= TN} E[prod_l chi(|S_{n_l}|)],
    chi(x) = e^(psi(x)) - 1,

by a k-layer forward recursion, so light-tail runs can be laid side by side
with both closed-form candidates for the continuum coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .continuum import (
    ContinuumParams,
    ContinuumPhasePoint,
    coefficient_candidates,
    continuum_free_energy_short,
)
from .lattice import folded_kernel, signed_kernel
from .localization import excursion_weights
from .model import ChargeModel, PhasePoint, PotentialSpec, WalkSpec, c_star, estimate_c_weights, psi
from .transfer import renewal_root

__all__ = [
    "ScalingSchedule",
    "scaling_exponents",
    "ScaledFreeEnergyPoint",
    "scaled_free_energy",
    "series_coefficient",
    "SeriesComparisonRow",
    "compare_to_continuum",
    "SCALED_COLUMNS",
    "SERIES_COLUMNS",
    "write_scaled_csv",
    "write_series_csv",
]

# default index horizon of the excursion sum, as a multiple of N: at the
# ladder top F ~ 1/N, so 48 N reaches e^(-48 F N) ~ e^(-5) past the
# renewal root's e-folding scale before the fitted tail takes over
DEFAULT_M_MULT = 48

# defaults for estimating the c(k) weights entering the continuum constants
DEFAULT_K_WEIGHTS = 64
DEFAULT_N_PROBE = 4096


def scaling_exponents(params: ContinuumParams) -> tuple[float, float]:
    """Decay-exponent pair (A, B) of the coupling schedule for this regime."""
    alpha, theta = params.alpha, params.theta
    regime = params.regime
    if regime == "long_range":
        return (1.0 - theta) / 2.0, (2.0 - theta) / 2.0
    if regime == "intermediate":
        return alpha / 2.0, (2.0 - theta) / 2.0
    return alpha / 2.0, alpha


@dataclass(frozen=True)
class ScalingSchedule:
    """Coupling schedule beta_N = beta_hat N^-A, h_N = h_hat N^-B on a ladder
    of even system sizes."""

    params: ContinuumParams
    beta_hat: float
    h_hat: float
    n_ladder: tuple[int, ...]

    def __post_init__(self):
        if self.beta_hat <= 0.0 or self.h_hat <= 0.0:
            raise ValueError("beta_hat and h_hat must be strictly positive")
        ladder = tuple(int(n) for n in self.n_ladder)
        if len(ladder) == 0:
            raise ValueError("n_ladder must be nonempty")
        if any(n < 2 or n % 2 for n in ladder):
            raise ValueError("ladder entries must be even integers >= 2")
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("n_ladder must be strictly increasing")
        object.__setattr__(self, "n_ladder", ladder)

    @property
    def regime(self) -> str:
        return self.params.regime

    @property
    def exponents(self) -> tuple[float, float]:
        return scaling_exponents(self.params)

    def beta_n(self, n: int) -> float:
        return self.beta_hat * float(n) ** -self.exponents[0]

    def h_n(self, n: int) -> float:
        return self.h_hat * float(n) ** -self.exponents[1]

    def phase_point(self, n: int) -> PhasePoint:
        return PhasePoint(beta=self.beta_n(n), h=self.h_n(n))


def _require_compatible(schedule: ScalingSchedule, walk: WalkSpec,
                        spec: PotentialSpec) -> None:
    """The lattice model must realize the (alpha, theta) the schedule scales for."""
    params = schedule.params
    if abs(walk.alpha - params.alpha) > 1e-12:
        raise ValueError(
            f"walk exponent {walk.alpha} does not match the schedule's {params.alpha}"
        )
    if spec.kind == "copolymer":
        raise ValueError("copolymer potential has no summable tail constant; "
                         "the weak-coupling schedule does not apply")
    if spec.kind == "power_tail":
        if abs(spec.theta - params.theta) > 1e-12:
            raise ValueError(
                f"potential tail {spec.theta} does not match the schedule's "
                f"{params.theta}"
            )
    elif params.regime != "short_range":
        # compactly supported potentials are light-tailed: only that regime fits
        raise ValueError(
            f"compactly supported potential is short_range, schedule says "
            f"{params.regime}"
        )


def _cstar_pair(walk: WalkSpec, spec: PotentialSpec,
                cstar_phi: float | None, cstar_phi2: float | None,
                k_weights: int, n_probe: int) -> tuple[float, float]:
    if cstar_phi is None or cstar_phi2 is None:
        weights = estimate_c_weights(walk, k_max=k_weights, n_probe=n_probe)
        if cstar_phi is None:
            cstar_phi = c_star(spec, weights, power=1).value
        if cstar_phi2 is None:
            cstar_phi2 = c_star(spec, weights, power=2).value
    return cstar_phi, cstar_phi2


@dataclass(frozen=True)
class ScaledFreeEnergyPoint:
    """One ladder entry of the weak-coupling free-energy harness."""

    n: int
    beta_n: float
    h_n: float
    n_times_f: float
    continuum_target: float | None
    rel_gap: float | None
    localized: bool
    diverged: bool


def scaled_free_energy(schedule: ScalingSchedule, walk: WalkSpec,
                       charges: ChargeModel, spec: PotentialSpec,
                       m_mult: int = DEFAULT_M_MULT, l: int | None = None,
                       cstar_phi: float | None = None,
                       cstar_phi2: float | None = None,
                       k_weights: int = DEFAULT_K_WEIGHTS,
                       n_probe: int = DEFAULT_N_PROBE) -> list[ScaledFreeEnergyPoint]:
    """N * F_ann(beta_N, h_N) along the ladder, with the continuum target.

    The free energy is the root of the truncated renewal identity built
    from the excursion weights at (beta_N, h_N), summed out to m_mult * N
    steps (fitted power-law tail beyond).  In the short_range regime the
    continuum target is the explicit light-tail free energy, evaluated with
    the lattice constants cstar[phi] and cstar[phi^2] (estimated from the
    walk's height distribution unless supplied); the other regimes have no
    closed form and report no target.
    """
    _require_compatible(schedule, walk, spec)
    if m_mult < 4:
        raise ValueError("m_mult must be >= 4")
    target = None
    if schedule.regime == "short_range":
        c1, c2 = _cstar_pair(walk, spec, cstar_phi, cstar_phi2,
                             k_weights, n_probe)
        target = continuum_free_energy_short(
            schedule.params,
            ContinuumPhasePoint(schedule.beta_hat, schedule.h_hat),
            c1, c2,
        )
    out = []
    for n in range(len(schedule.n_ladder)):
        size = schedule.n_ladder[n]
        beta_n, h_n = schedule.beta_n(size), schedule.h_n(size)
        ew = excursion_weights(
            walk, spec, charges, beta_n, h_n, m_max=m_mult * size, l=l
        )
        root = renewal_root(ew.a, walk.alpha)
        n_times_f = size * root.f
        rel_gap = None
        if target is not None and target > 0.0:
            rel_gap = abs(n_times_f - target) / target
        out.append(ScaledFreeEnergyPoint(
            n=size, beta_n=beta_n, h_n=h_n, n_times_f=n_times_f,
            continuum_target=target, rel_gap=rel_gap,
            localized=root.localized, diverged=ew.diverged,
        ))
    return out


# ------------------------------------------------------- series coefficients

def series_coefficient(walk: WalkSpec, charges: ChargeModel,
                       spec: PotentialSpec, point: PhasePoint, tn: int,
                       k: int, l: int | None = None) -> float:
    """k-th coefficient of the partition expansion in chi = e^psi - 1:

        C_{TN,k} = sum_{n_1 < ... < n_k <= TN} E[prod_l chi(|S_{n_l}|)].

    Computed by a forward recursion over k + 1 layers, where layer j holds
    the expected chi-product over j already-selected indices jointly with
    the walker position; stepping either keeps the index count (transfer
    only) or selects the new time point (transfer, then weight by chi).
    Cost O(TN * k * L).
    """
    if not 1 <= k <= 4:
        raise ValueError("series coefficients are supported for 1 <= k <= 4")
    if tn < 1:
        raise ValueError("tn must be a positive integer")
    l_eff = l if l is not None else walk.resolve_l(tn)
    if spec.symmetric:
        ker = folded_kernel(walk.drift, l_eff)
        heights = np.arange(l_eff + 1)
        origin = 0
    else:
        ker = signed_kernel(walk.drift, l_eff)
        heights = ker.heights()
        origin = ker.origin
    chi = np.exp(np.asarray(psi(charges, spec, point.beta, point.h, heights),
                            dtype=float)) - 1.0
    layers = np.zeros((k + 1, len(heights)))
    layers[0, origin] = 1.0
    stepped = np.zeros_like(layers)
    for _ in range(tn):
        for j in range(k + 1):
            ker.step(layers[j], stepped[j])
        for j in range(k, 0, -1):
            np.multiply(stepped[j - 1], chi, out=layers[j])
            layers[j] += stepped[j]
        layers[0] = stepped[0]
    return float(layers[k].sum())


@dataclass(frozen=True)
class SeriesComparisonRow:
    """Discrete expansion coefficient next to both continuum candidates."""

    n: int
    k: int
    c_tnk: float
    hat_gamma_ak: float
    hat_gamma_ak_plus1: float
    rel_gap: float | None  # against the canonical (+1) form


def compare_to_continuum(schedule: ScalingSchedule, walk: WalkSpec,
                         charges: ChargeModel, spec: PotentialSpec,
                         T: float = 1.0, k: int = 1, l: int | None = None,
                         cstar_phi: float | None = None,
                         cstar_phi2: float | None = None,
                         k_weights: int = DEFAULT_K_WEIGHTS,
                         n_probe: int = DEFAULT_N_PROBE) -> list[SeriesComparisonRow]:
    """C_{TN,k} along the ladder against both closed-form candidates.

    Light-tail (short_range) schedules only: that is where the coefficient
    has a closed form to converge to.  The two candidates differ by the
    factor alpha k (see the continuum module); the relative gap is reported
    against the canonical Gamma(alpha k + 1) form.
    """
    if schedule.regime != "short_range":
        raise ValueError("closed-form comparison needs the short_range regime")
    if not 1 <= k <= 3:
        raise ValueError("continuum comparison supports 1 <= k <= 3")
    if T <= 0.0:
        raise ValueError("T must be positive")
    _require_compatible(schedule, walk, spec)
    c1, c2 = _cstar_pair(walk, spec, cstar_phi, cstar_phi2, k_weights, n_probe)
    cand = coefficient_candidates(
        schedule.params,
        ContinuumPhasePoint(schedule.beta_hat, schedule.h_hat),
        c1, c2, T, k,
    )
    rows = []
    for size in schedule.n_ladder:
        tn = int(round(T * size))
        c_tnk = series_coefficient(
            walk, charges, spec, schedule.phase_point(size), tn, k, l=l
        )
        rel_gap = None
        if cand.gamma_ak_plus1 != 0.0:
            rel_gap = abs(c_tnk - cand.gamma_ak_plus1) / abs(cand.gamma_ak_plus1)
        rows.append(SeriesComparisonRow(
            n=size, k=k, c_tnk=c_tnk, hat_gamma_ak=cand.gamma_ak,
            hat_gamma_ak_plus1=cand.gamma_ak_plus1, rel_gap=rel_gap,
        ))
    return rows


# ----------------------------------------------------------------- CSV output

SCALED_COLUMNS = ("N", "beta_N", "h_N", "N_times_F", "continuum_target", "rel_gap")

SERIES_COLUMNS = ("N", "k", "C_TNk", "hatC_gamma_ak", "hatC_gamma_ak_plus1")


def _write_csv(path, columns, rows, header_lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for cells in rows:
            fh.write(",".join(
                "" if v is None else (repr(v) if isinstance(v, float) else str(v))
                for v in cells
            ) + "\n")


def write_scaled_csv(path, points: list[ScaledFreeEnergyPoint],
                     header_lines=()) -> None:
    _write_csv(path, SCALED_COLUMNS, [
        (p.n, p.beta_n, p.h_n, p.n_times_f, p.continuum_target, p.rel_gap)
        for p in points
    ], header_lines)


def write_series_csv(path, rows: list[SeriesComparisonRow],
                     header_lines=()) -> None:
    _write_csv(path, SERIES_COLUMNS, [
        (r.n, r.k, r.c_tnk, r.hat_gamma_ak, r.hat_gamma_ak_plus1)
        for r in rows
    ], header_lines)
