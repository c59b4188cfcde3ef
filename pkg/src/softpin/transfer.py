"""Partition functions and free energies by forward transfer recursion.

Both endpoint conditions are carried in one sweep: after n steps the
renormalized mass vector yields the free partition function (sum over
heights) and the constrained one (mass at the origin, even n only).  The
recursion is log-stabilized by factoring out the running maximum, so
horizons of 2^20 steps stay in float64 range.

Free-energy estimates report the constrained value at the largest ladder
rung (a rigorous lower bound on the limit by super-additivity) bracketed
against the free value, with the last ladder drift folded into the error:
in the delocalized phase both estimates approach the limit 0 from below at
an O(log N / N) rate, so the bracket half-width alone would under-cover.

``renewal_root`` solves the excursion identity sum_m A_m e^(-F m) = 1 for
the homogeneous (annealed) model; fed with the first-passage excursion
weights it resolves free energies far below the ladder resolution (needed
deep in the weak-coupling window).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.optimize import brentq

from .lattice import folded_kernel, signed_kernel
from .model import ChargeModel, PotentialSpec, WalkSpec, phi_eval, psi

__all__ = [
    "PartitionSweep",
    "FreeEnergyEstimate",
    "RenewalRoot",
    "annealed_partition",
    "quenched_partition",
    "annealed_sweep",
    "quenched_sweep",
    "annealed_free_energy",
    "quenched_free_energy",
    "compare_free_constrained",
    "renewal_root",
    "ladder_csv_rows",
    "write_ladder_csv",
    "default_ladder",
]


@dataclass(frozen=True)
class PartitionSweep:
    """log partition functions recorded along one forward sweep."""

    n_values: np.ndarray
    log_z_free: np.ndarray
    log_z_constrained: np.ndarray

    def f_free(self) -> np.ndarray:
        return self.log_z_free / self.n_values

    def f_constrained(self) -> np.ndarray:
        return self.log_z_constrained / self.n_values


def _check_record_points(record_at) -> np.ndarray:
    pts = np.asarray(sorted(set(int(n) for n in record_at)), dtype=int)
    if len(pts) == 0:
        raise ValueError("need at least one record point")
    if pts[0] < 0:
        raise ValueError("record points must be >= 0")
    if np.any(pts % 2 != 0):
        raise ValueError("constrained partitions need even step counts (period 2)")
    return pts


def _resolve_layout(walk: WalkSpec, spec: PotentialSpec, n_max: int,
                    l: int | None, folded: bool | None):
    use_folded = spec.symmetric if folded is None else folded
    if use_folded and not spec.symmetric:
        raise ValueError("folded recursion needs a symmetric potential")
    l_eff = l if l is not None else walk.resolve_l(n_max)
    if use_folded:
        ker = folded_kernel(walk.drift, l_eff)
        heights = np.arange(l_eff + 1)
        origin = 0
    else:
        ker = signed_kernel(walk.drift, l_eff)
        heights = ker.heights()
        origin = ker.origin
    return ker, heights, origin


def _sweep(ker, origin: int, step_log_weights, record_at: np.ndarray) -> PartitionSweep:
    """step_log_weights(n) -> per-site log weight vector for step n (1-based)."""
    n_max = int(record_at[-1])
    size = len(ker.p_up)
    v = np.zeros(size)
    v[origin] = 1.0
    nxt = np.zeros_like(v)
    acc = 0.0
    rec_free = np.empty(len(record_at))
    rec_con = np.empty(len(record_at))
    idx = 0
    if record_at[0] == 0:  # empty product: Z = Z_constrained = 1
        rec_free[0] = rec_con[0] = 0.0
        idx = 1
    for n in range(1, n_max + 1):
        nxt = ker.step(v, nxt)
        w = step_log_weights(n)
        if w is not None:
            np.multiply(nxt, w, out=nxt)
        m = nxt.max()
        acc += math.log(m)
        nxt /= m
        v, nxt = nxt, v
        if idx < len(record_at) and n == record_at[idx]:
            rec_free[idx] = acc + math.log(v.sum())
            rec_con[idx] = acc + math.log(v[origin])
            idx += 1
    return PartitionSweep(
        n_values=record_at.copy(), log_z_free=rec_free, log_z_constrained=rec_con
    )


def annealed_sweep(walk: WalkSpec, spec: PotentialSpec, charges: ChargeModel,
                   beta: float, h: float, record_at, l: int | None = None,
                   folded: bool | None = None) -> PartitionSweep:
    pts = _check_record_points(record_at)
    ker, heights, origin = _resolve_layout(walk, spec, int(pts[-1]), l, folded)
    w = np.exp(psi(charges, spec, beta, h, heights))
    return _sweep(ker, origin, lambda n: w, pts)


def quenched_sweep(walk: WalkSpec, spec: PotentialSpec, beta: float, h: float,
                   omega: np.ndarray, record_at, l: int | None = None,
                   folded: bool | None = None) -> PartitionSweep:
    pts = _check_record_points(record_at)
    omega = np.asarray(omega, dtype=float)
    if len(omega) < pts[-1]:
        raise ValueError("need one charge per step")
    ker, heights, origin = _resolve_layout(walk, spec, int(pts[-1]), l, folded)
    phi_vec = np.asarray(phi_eval(spec, heights), dtype=float)
    g = beta * omega - h  # per-step coupling in front of phi(S_n)
    return _sweep(ker, origin, lambda n: np.exp(g[n - 1] * phi_vec), pts)


def annealed_partition(walk, spec, charges, beta, h, n: int,
                       l: int | None = None, folded: bool | None = None):
    """(log Z_free, log Z_constrained) after n steps, n even."""
    sw = annealed_sweep(walk, spec, charges, beta, h, [n], l=l, folded=folded)
    return float(sw.log_z_free[0]), float(sw.log_z_constrained[0])


def quenched_partition(walk, spec, beta, h, omega, n: int,
                       l: int | None = None, folded: bool | None = None):
    sw = quenched_sweep(walk, spec, beta, h, omega, [n], l=l, folded=folded)
    return float(sw.log_z_free[0]), float(sw.log_z_constrained[0])


# ------------------------------------------------------------ free energies

def default_ladder(n_max: int, n_points: int = 6) -> list[int]:
    """Halving ladder ending at n_max, even rungs, smallest >= 16."""
    if n_max < 16 or n_max % 2 != 0:
        raise ValueError("n_max must be even and >= 16")
    out = []
    n = n_max
    while len(out) < n_points and n >= 16 and n % 2 == 0:
        out.append(n)
        n //= 2
    return sorted(out)


@dataclass(frozen=True)
class FreeEnergyEstimate:
    """Bracketed free-energy estimate at the largest ladder rung.

    value is the constrained estimate (approaches the limit from below);
    error = half bracket gap + last ladder drift + standard error over
    disorder samples (annealed runs have sem = 0).
    """

    beta: float
    h: float
    n_max: int
    value: float
    error: float
    f_free: float
    f_constrained: float
    gap: float
    drift: float
    sem: float
    converged: bool
    ladder: PartitionSweep
    n_samples: int = 1
    seed: int | None = None
    sample_sweeps: list = field(default=None, repr=False, compare=False)

    @property
    def bracket(self) -> tuple[float, float]:
        return (self.f_constrained, self.f_free)


def _estimate_from_ladder(sweep: PartitionSweep, beta, h, sem=0.0,
                          n_samples=1, seed=None, sample_sweeps=None):
    f_free = sweep.f_free()
    f_con = sweep.f_constrained()
    gaps = f_free - f_con
    n_max = int(sweep.n_values[-1])
    drift = abs(f_con[-1] - f_con[-2]) if len(f_con) > 1 else 0.0
    gap = float(gaps[-1])
    converged = len(gaps) < 2 or gap <= gaps[-2] + 1e-12
    return FreeEnergyEstimate(
        beta=beta, h=h, n_max=n_max,
        value=float(f_con[-1]),
        error=float(0.5 * gap + drift + sem),
        f_free=float(f_free[-1]), f_constrained=float(f_con[-1]),
        gap=gap, drift=float(drift), sem=float(sem), converged=bool(converged),
        ladder=sweep, n_samples=n_samples, seed=seed, sample_sweeps=sample_sweeps,
    )


def annealed_free_energy(walk, spec, charges, beta, h, n_max: int,
                         n_points: int = 6, l: int | None = None) -> FreeEnergyEstimate:
    ladder = default_ladder(n_max, n_points)
    sweep = annealed_sweep(walk, spec, charges, beta, h, ladder, l=l)
    return _estimate_from_ladder(sweep, beta, h)


def quenched_free_energy(walk, spec, charges, beta, h, n_max: int,
                         n_samples: int, seed: int, n_points: int = 6,
                         l: int | None = None) -> FreeEnergyEstimate:
    """Disorder-averaged free energy over independent charge sequences.

    Sample i draws its charges from the sub-stream (seed, i), so results
    are reproducible for any sample count and independent of evaluation
    order.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    ladder = default_ladder(n_max, n_points)
    sweeps = []
    for i in range(n_samples):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(seed, spawn_key=(i,)))
        )
        omega = charges.sample(rng, n_max)
        sweeps.append(quenched_sweep(walk, spec, beta, h, omega, ladder, l=l))
    mean_sweep = PartitionSweep(
        n_values=sweeps[0].n_values.copy(),
        log_z_free=np.mean([s.log_z_free for s in sweeps], axis=0),
        log_z_constrained=np.mean([s.log_z_constrained for s in sweeps], axis=0),
    )
    f_con_samples = np.array([s.f_constrained()[-1] for s in sweeps])
    sem = (
        float(np.std(f_con_samples, ddof=1) / math.sqrt(n_samples))
        if n_samples > 1 else 0.0
    )
    return _estimate_from_ladder(
        mean_sweep, beta, h, sem=sem, n_samples=n_samples, seed=seed,
        sample_sweeps=sweeps,
    )


def compare_free_constrained(walk, spec, charges, beta, h, ladder,
                             l: int | None = None) -> np.ndarray:
    """Rows (N, (log Z_free - log Z_constrained)/N) along the ladder.

    The per-step boundary-condition discrepancy; nonnegative, and decaying
    like O(log N / N) whenever the two conditions share a free energy.
    """
    sweep = annealed_sweep(walk, spec, charges, beta, h, ladder, l=l)
    diff = (sweep.log_z_free - sweep.log_z_constrained) / sweep.n_values
    return np.column_stack([sweep.n_values.astype(float), diff])


# ------------------------------------------------------------- renewal root

@dataclass(frozen=True)
class RenewalRoot:
    """Root of the truncated excursion identity sum_m A_m e^(-F m) = 1.

    f_lower drops the m > m_max tail entirely (never above the true root);
    f adds a fitted power-law tail. localized is False when even the
    tail-completed sum stays <= 1.
    """

    f: float
    f_lower: float
    tail_coeff: float
    partial_sum: float
    localized: bool


def _tail_integral(alpha: float, m0: float, f: float) -> float:
    """integral_{m0}^{inf} x^(-(1+alpha)) e^(-f x) dx, f >= 0."""
    if f <= 0.0:
        return m0 ** (-alpha) / alpha
    head = m0 ** (-alpha) * math.exp(-f * m0) / alpha
    rest = (
        (f ** alpha / alpha)
        * math.gamma(1.0 - alpha)
        * special.gammaincc(1.0 - alpha, f * m0)
    )
    return head - rest


def renewal_root(weights: np.ndarray, alpha: float, fit_tail: bool = True) -> RenewalRoot:
    """Solve sum_m A_m e^(-F m) (+ fitted tail) = 1 for F >= 0.

    weights[m] is the m-step excursion weight A_m (index 0 unused).  The
    tail coefficient is fitted on the top octave of m, where the excursion
    weights have settled onto their ~m^-(1+alpha) decay.
    """
    a = np.asarray(weights, dtype=float)
    if len(a) < 8:
        raise ValueError("need excursion weights out to m >= 8")
    m = np.arange(len(a), dtype=float)
    m_max = len(a) - 1
    c_fit = 0.0
    if fit_tail:
        window = (m >= m_max // 2) & (m > 0) & (a > 0)
        if window.sum() >= 4:
            c_fit = float(np.mean(a[window] * m[window] ** (1.0 + alpha)))

    def g(f: float) -> float:
        s = float(np.dot(a[2:], np.exp(-f * m[2:])))
        if c_fit > 0.0:
            s += c_fit * _tail_integral(alpha, m_max + 1.0, f)
        return s - 1.0

    partial = float(a.sum())
    if g(0.0) <= 0.0:
        return RenewalRoot(
            f=0.0, f_lower=0.0, tail_coeff=c_fit, partial_sum=partial,
            localized=False,
        )
    hi = 1.0 / m_max
    while g(hi) > 0.0 and hi < 1e3:
        hi *= 2.0
    f_root = float(brentq(g, 0.0, hi, xtol=1e-15, rtol=1e-13))
    if fit_tail and c_fit > 0.0:
        c_save, c_fit = c_fit, 0.0
        if g(0.0) <= 0.0:
            f_lower = 0.0
        else:
            hi2 = max(f_root, 1.0 / m_max)
            while g(hi2) > 0.0 and hi2 < 1e3:
                hi2 *= 2.0
            f_lower = float(brentq(g, 0.0, hi2, xtol=1e-15, rtol=1e-13))
        c_fit = c_save
    else:
        f_lower = f_root
    return RenewalRoot(
        f=f_root, f_lower=f_lower, tail_coeff=c_fit, partial_sum=partial,
        localized=True,
    )


# -------------------------------------------------------------------- CSV IO

LADDER_COLUMNS = ("N", "log_Z_free", "log_Z_constrained", "f_free", "f_constrained")


def ladder_csv_rows(estimate: FreeEnergyEstimate) -> list[dict]:
    """Row dicts for the ladder CSV; quenched runs add sample and seed."""
    rows = []
    if estimate.sample_sweeps:
        for i, sw in enumerate(estimate.sample_sweeps):
            for j, n in enumerate(sw.n_values):
                rows.append({
                    "N": int(n),
                    "log_Z_free": float(sw.log_z_free[j]),
                    "log_Z_constrained": float(sw.log_z_constrained[j]),
                    "f_free": float(sw.log_z_free[j] / n),
                    "f_constrained": float(sw.log_z_constrained[j] / n),
                    "sample": i,
                    "seed": estimate.seed,
                })
    else:
        sw = estimate.ladder
        for j, n in enumerate(sw.n_values):
            rows.append({
                "N": int(n),
                "log_Z_free": float(sw.log_z_free[j]),
                "log_Z_constrained": float(sw.log_z_constrained[j]),
                "f_free": float(sw.log_z_free[j] / n),
                "f_constrained": float(sw.log_z_constrained[j] / n),
            })
    return rows


def write_ladder_csv(path, estimate: FreeEnergyEstimate, header_lines=()) -> None:
    rows = ladder_csv_rows(estimate)
    cols = list(LADDER_COLUMNS) + (
        ["sample", "seed"] if estimate.sample_sweeps else []
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(_cell(r[c]) for c in cols) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
