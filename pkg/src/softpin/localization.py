"""Excursion-sum localization criterion and critical curves.

The annealed model localizes (positive free energy) exactly when the
excursion sum

    N = sum_m E[ exp(sum_{n=1}^{m} psi(S_n)) ; first return to 0 at m ]

exceeds 1.  The sum is evaluated by a weighted first-passage recursion;
truncation at m_max leaves a tail which is handled three ways:

- rigorous bound, available whenever psi <= 0 away from the origin (the
  excursion interior never collects positive weight);
- conservative heuristic bound otherwise (sup of psi^+ off the origin,
  decayed at the diffusive-escape rate), which may be infinite;
- fitted power-law point estimate (for root finding, not certification).

Verdicts use the bounds; bisections for critical curves use the point
estimate, since near the critical height the rigorous verdict is
``undetermined`` in a band of width ~m_max^(-alpha) by construction.

A tempering parameter kappa rescales the phase point to (kappa*beta,
kappa*h) *before* the charge law is averaged; by construction the
tempered sum equals the plain sum at the rescaled phase point.  At
kappa = 1/(1+alpha) a tempered sum below 1 certifies that the *quenched*
free energy vanishes, which is where the rescaled lower critical curve
comes from.  Comparing against threshold 1/r instead of 1 reproduces the
criterion for a transient-walk variant whose return law is r times ours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import folded_kernel, signed_kernel
from .model import ChargeModel, PotentialSpec, WalkSpec, psi, return_law
from .transfer import quenched_free_energy

__all__ = [
    "ExcursionWeights",
    "CriterionValue",
    "CriticalBracket",
    "excursion_weights",
    "excursion_sum",
    "transient_criterion",
    "annealed_critical_h",
    "rescaled_lower_bound",
    "quenched_critical_h",
    "criterion_start_invariance",
    "StartInvarianceResult",
    "CURVE_COLUMNS",
    "write_curve_csv",
]

DIVERGENCE_CAP = 1e12


@dataclass(frozen=True)
class ExcursionWeights:
    """Per-length excursion weights A_m for the tempered phase point."""

    m_values: np.ndarray
    a: np.ndarray
    psi0: float
    psi_plus_off_origin: float
    alpha: float
    decay_rate: float  # min(theta/2, 1-alpha); 0 disables the heuristic tail
    diverged: bool
    m_stop: int

    @property
    def m_max(self) -> int:
        return len(self.a) - 1


def _decay_rate(spec: PotentialSpec, alpha: float) -> float:
    if spec.kind == "copolymer":
        return 0.0  # non-decaying arm: no diffusive escape from the reward
    if spec.kind == "power_tail":
        return min(spec.theta / 2.0, 1.0 - alpha)
    return 1.0 - alpha  # compactly supported potentials


def excursion_weights(walk: WalkSpec, spec: PotentialSpec, charges: ChargeModel,
                      beta: float, h: float, m_max: int, kappa: float = 1.0,
                      l: int | None = None,
                      divergence_cap: float = DIVERGENCE_CAP) -> ExcursionWeights:
    """First-passage recursion for the excursion weights A_m, m <= m_max.

    A_m multiplies the first-return probability by the exponential weight
    collected at the tempered phase point (kappa*beta, kappa*h); interior
    sites never include the origin, whose weight enters once at the return
    step.  Aborts (diverged=True) once the partial sum passes the cap.
    """
    if m_max < 4:
        raise ValueError("m_max must be >= 4")
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    bt, ht = kappa * beta, kappa * h
    l_eff = l if l is not None else walk.resolve_l(m_max)
    a = np.zeros(m_max + 1)
    psi0 = float(psi(charges, spec, bt, ht, 0))
    w0 = math.exp(psi0)
    if spec.symmetric:
        ker = folded_kernel(walk.drift, l_eff)
        heights = np.arange(l_eff + 1)
        origin = 0
    else:
        ker = signed_kernel(walk.drift, l_eff)
        heights = ker.heights()
        origin = ker.origin
    w = np.exp(np.asarray(psi(charges, spec, bt, ht, heights), dtype=float))
    psi_off = np.asarray(psi(charges, spec, bt, ht, heights), dtype=float)
    psi_off[origin] = -math.inf
    psi_plus = max(0.0, float(psi_off.max()))

    v = np.zeros(len(heights))
    v[origin] = 1.0
    nxt = np.zeros_like(v)
    partial = 0.0
    diverged = False
    m_stop = m_max
    for n in range(1, m_max + 1):
        nxt = ker.step(v, nxt)
        a[n] = nxt[origin] * w0
        nxt[origin] = 0.0
        np.multiply(nxt, w, out=nxt)
        v, nxt = nxt, v
        partial += a[n]
        if partial > divergence_cap or v.max() > 1e200:
            diverged = True
            m_stop = n
            a[n + 1 :] = 0.0
            break
    return ExcursionWeights(
        m_values=np.arange(m_max + 1), a=a, psi0=psi0,
        psi_plus_off_origin=psi_plus, alpha=walk.alpha,
        decay_rate=_decay_rate(spec, walk.alpha), diverged=diverged,
        m_stop=m_stop,
    )


@dataclass(frozen=True)
class CriterionValue:
    """Excursion-sum value with truncation-tail accounting.

    verdict: "yes" (sum > threshold, certified by the partial sum alone),
    "no" (partial + tail bound <= threshold), or "undetermined".
    ``estimate`` completes the partial sum with a fitted power-law tail;
    it drives bisections but certifies nothing.
    """

    value: float
    tail_bound: float
    estimate: float
    verdict: str
    threshold: float
    kappa: float
    m_max: int
    diverged: bool

    @property
    def localized(self) -> bool | None:
        if self.verdict == "yes":
            return True
        if self.verdict == "no":
            return False
        return None


# slack added to the rigorous tail branch: the reflecting truncation biases
# the computed return mass upward by less than this for L >= 4*sqrt(m_max)
TAIL_MASS_SLACK = 1e-6


def _tail_bound(ew: ExcursionWeights, k_partial: float) -> float:
    k_tail = max(0.0, 1.0 - k_partial) + TAIL_MASS_SLACK
    base = math.exp(max(0.0, ew.psi0))
    if ew.psi_plus_off_origin <= 0.0:
        return base * k_tail
    r = ew.decay_rate
    if r <= 0.0:
        return math.inf
    m_max = ew.m_max
    # anchor the return-law tail on the last computed octave
    window = ew.a[m_max // 2 :]
    ms = np.arange(m_max // 2, m_max + 1, dtype=float)
    pos = window > 0
    if not np.any(pos):
        return base * k_tail
    c_anchor = float(np.max(window[pos] * ms[pos] ** (1.0 + ew.alpha)))
    b1 = ew.psi_plus_off_origin
    grid = np.arange(m_max + 1, 33 * m_max, dtype=float)
    log_terms = (
        math.log(c_anchor)
        - (1.0 + ew.alpha) * np.log(grid)
        + b1 * grid ** (1.0 - r)
    )
    peak = float(log_terms.max())
    if peak > 40.0 or log_terms[-1] > log_terms[-2]:
        return math.inf  # heuristic sum does not converge in range
    total = float(np.exp(log_terms).sum())
    if math.exp(log_terms[-1]) > 1e-12 * max(total, 1e-300):
        return math.inf
    return base * k_tail if b1 == 0.0 else total + base * k_tail


def _tail_estimate(ew: ExcursionWeights) -> float:
    if ew.diverged:
        return math.inf
    alpha = ew.alpha
    m_max = ew.m_max
    ms = np.arange(m_max // 2, m_max + 1, dtype=float)
    window = ew.a[m_max // 2 :]
    pos = window > 0
    if not np.any(pos):
        return 0.0
    mf = ms[pos]
    y = window[pos] * mf ** (1.0 + alpha)
    if len(mf) < 8:
        # too short to fit curvature: flat fit over the full window, parity
        # zeros included so the constant pairs with an integral over all m
        c_fit = float(np.mean(window * ms ** (1.0 + alpha)))
        return max(0.0, c_fit * (m_max + 1.0) ** (-alpha) / alpha)
    # two-term fit y ~ c + d m^(-delta) on the supported lengths; the
    # leading finite-length correction to the return law decays with
    # exponent min(1, 2 alpha)
    delta = min(1.0, 2.0 * alpha)
    design = np.vstack([np.ones_like(mf), mf**-delta]).T
    (c_fit, d_fit), *_ = np.linalg.lstsq(design, y, rcond=None)
    m0 = m_max + 1.0
    tail = 0.5 * (
        c_fit * m0**-alpha / alpha
        + d_fit * m0 ** -(alpha + delta) / (alpha + delta)
    )
    return max(0.0, float(tail))


def excursion_sum(walk, spec, charges, beta, h, m_max: int = 4096,
                  kappa: float = 1.0, threshold: float = 1.0,
                  l: int | None = None,
                  k_partial: float | None = None) -> CriterionValue:
    """Evaluate the localization sum against ``threshold`` (default 1).

    k_partial, when given, is the precomputed mass sum(K(m), m <= m_max)
    of the bare return law on the same lattice (saves a recursion in
    bisection loops).
    """
    ew = excursion_weights(walk, spec, charges, beta, h, m_max, kappa=kappa, l=l)
    partial = float(ew.a.sum())
    if ew.diverged:
        return CriterionValue(
            value=partial, tail_bound=math.inf, estimate=math.inf,
            verdict="yes", threshold=threshold, kappa=kappa, m_max=m_max,
            diverged=True,
        )
    if k_partial is None:
        k_partial = float(return_law(walk, m_max).sum())
    tail = _tail_bound(ew, k_partial)
    est = partial + _tail_estimate(ew)
    if partial > threshold:
        verdict = "yes"
    elif partial + tail <= threshold:
        verdict = "no"
    else:
        verdict = "undetermined"
    return CriterionValue(
        value=partial, tail_bound=tail, estimate=est, verdict=verdict,
        threshold=threshold, kappa=kappa, m_max=m_max, diverged=False,
    )


def transient_criterion(walk, spec, charges, beta, h, r: float,
                        m_max: int = 4096, kappa: float = 1.0,
                        l: int | None = None) -> CriterionValue:
    """Localization criterion for the transient-walk variant.

    A transient walk whose first-return law integrates to r < 1 is, after
    normalization, our recurrent walk with the localization threshold moved
    from 1 to 1/r (the lost mass acts as a constant depinning penalty).
    """
    if not 0.0 < r <= 1.0:
        raise ValueError("the return mass r must lie in (0, 1]")
    return excursion_sum(
        walk, spec, charges, beta, h, m_max=m_max, kappa=kappa,
        threshold=1.0 / r, l=l,
    )


# ---------------------------------------------------------- critical curves

@dataclass(frozen=True)
class CriticalBracket:
    """Bisection bracket [lo, hi] for a critical height."""

    beta: float
    lo: float
    hi: float
    kappa: float = 1.0
    confidence: float = 1.0  # nominal; < 1 when the predicate is sampled

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)


def _upper_start(charges: ChargeModel, spec: PotentialSpec, beta: float,
                 kappa: float) -> float:
    """Smallest h with tempered psi <= 0 everywhere: a sure 'no'."""
    phi_max = spec.phi_max()
    if beta == 0.0:
        return 0.25
    return float(charges.cumulant(kappa * beta * phi_max) / (kappa * phi_max)) + 0.05


def annealed_critical_h(walk, spec, charges, beta: float, tol: float = 1e-3,
                        m_max: int = 4096, kappa: float = 1.0,
                        l: int | None = None) -> CriticalBracket:
    """Bracket the critical height of the (tempered) excursion criterion.

    Bisection on the tail-completed point estimate of the excursion sum;
    the bracket is an estimate with resolution tol, not a certification
    (rigorous verdicts blur into an ``undetermined`` band of width
    ~m_max^(-alpha) around the curve).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    l_eff = l if l is not None else walk.resolve_l(m_max)
    k_partial = float(return_law(walk, m_max).sum())

    def localized(h: float) -> bool:
        cv = excursion_sum(
            walk, spec, charges, beta, h, m_max=m_max, kappa=kappa, l=l_eff,
            k_partial=k_partial,
        )
        return cv.estimate > cv.threshold

    hi = _upper_start(charges, spec, beta, kappa)
    if localized(hi):  # should not happen; widen defensively
        for _ in range(60):
            hi *= 2.0
            if not localized(hi):
                break
        else:
            raise RuntimeError("no delocalized height found")
    lo = 0.0
    if not localized(lo):
        step = max(tol, 0.05)
        while not localized(lo) and lo > -4.0:
            lo -= step
            step *= 2.0
        if not localized(lo):
            raise RuntimeError("no localized height found down to h = -4")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if localized(mid):
            lo = mid
        else:
            hi = mid
    return CriticalBracket(beta=beta, lo=lo, hi=hi, kappa=kappa)


def rescaled_lower_bound(walk, spec, charges, beta: float, tol: float = 1e-3,
              m_max: int = 4096, l: int | None = None) -> CriticalBracket:
    """Rescaled annealed curve bounding the quenched critical height from
    below: (1+alpha) * h_c^ann(beta/(1+alpha))."""
    s = 1.0 + walk.alpha
    inner = annealed_critical_h(
        walk, spec, charges, beta / s, tol=tol / s, m_max=m_max, l=l
    )
    return CriticalBracket(
        beta=beta, lo=s * inner.lo, hi=s * inner.hi, kappa=inner.kappa
    )


def quenched_critical_h(walk, spec, charges, beta: float, n_max: int = 4096,
                        n_samples: int = 200, seed: int = 0,
                        tol: float = 5e-3, detect: float = 3.0,
                        h_hi: float | None = None) -> CriticalBracket:
    """Monte Carlo confidence band for the quenched critical height.

    The transition is located through the sign of the disorder-averaged
    constrained free energy at scale n_max: the lower edge is the largest
    height where the sample mean clears detect standard errors above zero,
    the upper edge the smallest height where it falls the same margin below
    zero.  Reusing one seed across heights makes the sampled profile smooth
    in h, so each edge is bisected to resolution tol; the band still carries
    the O(log(n_max)/n_max) downward drift of the finite-size crossing.
    """
    if h_hi is None:
        h_hi = _upper_start(charges, spec, beta, 1.0)

    cache: dict[float, tuple[float, float]] = {}

    def mean_sem(h: float) -> tuple[float, float]:
        if h not in cache:
            est = quenched_free_energy(
                walk, spec, charges, beta, h, n_max=n_max,
                n_samples=n_samples, seed=seed,
            )
            cache[h] = (est.f_constrained, est.sem)
        return cache[h]

    def surely_localized(h: float) -> bool:
        mean, sem = mean_sem(h)
        return mean - detect * sem > 0.0

    def surely_delocalized(h: float) -> bool:
        mean, sem = mean_sem(h)
        return mean + detect * sem < 0.0

    if not surely_localized(0.0):
        return CriticalBracket(beta=beta, lo=0.0, hi=0.0, confidence=0.0)
    top = h_hi
    for _ in range(60):
        if surely_delocalized(top):
            break
        top *= 2.0
    else:
        raise RuntimeError("no delocalized height found")

    lo, hi = 0.0, top
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if surely_localized(mid):
            lo = mid
        else:
            hi = mid
    band_lo = lo

    lo, hi = band_lo, top
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if surely_delocalized(mid):
            hi = mid
        else:
            lo = mid
    conf = math.erf(detect / math.sqrt(2.0))
    return CriticalBracket(beta=beta, lo=band_lo, hi=hi, confidence=conf)


# ------------------------------------------------------- start invariance

@dataclass(frozen=True)
class StartInvarianceResult:
    values: np.ndarray      # A_x per start state (inf when diverged)
    above: np.ndarray       # A_x > 1 per state
    consistent: bool        # same side of 1 from every start


def criterion_start_invariance(transition: np.ndarray, psi_values: np.ndarray,
                               m_max: int = 4096,
                               cap: float = DIVERGENCE_CAP) -> StartInvarianceResult:
    """First-return criterion evaluated from every state of a finite chain.

    For an irreducible finite chain the predicate A_x > 1 does not depend
    on the start state x (the excursion sums are linked through a Möbius
    relation), even though the values A_x differ.
    """
    p = np.asarray(transition, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("transition must be square")
    if np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-10):
        raise ValueError("transition rows must be probability vectors")
    w = np.exp(np.asarray(psi_values, dtype=float))
    if len(w) != p.shape[0]:
        raise ValueError("psi_values length mismatch")
    n = p.shape[0]
    values = np.empty(n)
    for x in range(n):
        v = p[x, :] * w  # one step out of x, weight collected at the new site
        total = float(v[x])
        v[x] = 0.0
        for _ in range(2, m_max + 1):
            v = (v @ p) * w
            total += float(v[x])
            v[x] = 0.0
            if total > cap or v.max() > 1e200:
                total = math.inf
                break
            if v.max() < 1e-300:
                break
        values[x] = total
    above = values > 1.0
    return StartInvarianceResult(
        values=values, above=above, consistent=bool(above.all() or not above.any())
    )


# ---------------------------------------------------------------- curve CSV

CURVE_COLUMNS = (
    "beta", "hc_ann_lo", "hc_ann_hi", "hc_lower_bound",
    "hc_que_lo", "hc_que_hi", "confidence",
)


def write_curve_csv(path, rows: list[dict], header_lines=()) -> None:
    """rows: dicts with CURVE_COLUMNS keys; quenched fields may be None."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(CURVE_COLUMNS) + "\n")
        for r in rows:
            cells = []
            for c in CURVE_COLUMNS:
                v = r.get(c)
                cells.append("" if v is None else (repr(v) if isinstance(v, float) else str(v)))
            fh.write(",".join(cells) + "\n")
