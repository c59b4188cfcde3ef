"""Bessel-process machinery: densities, local time, and continuum free energies.

The scaling limit of the reflected walk is the Bessel-like diffusion with
generator (1/2)d²/dx² - ((alpha - 1/2)/x) d/dx reflected at 0.  Started at
the origin its marginal density has the closed form

    g_t(0,y) = (2^alpha / Gamma(1-alpha)) y^(1-2 alpha) t^(alpha-1) e^(-y^2/2t)

and away from the origin it involves the modified Bessel function I of
(negative, fractional) order -alpha — modified, not ordinary: only the
all-positive-terms kernel is a probability density (at alpha = 1/2 it
reduces to the cosh of the reflected-Brownian kernel).  The weak-coupling
limits of the lattice free energy are expressed through three functionals
of this process:

- heavy potential tails: (1/2) bhat^2 c^2 Int X^(-2 theta)
                          - hhat c Int X^(-theta);
- intermediate tails:    (1/2) bhat^2 cstar[phi^2] L_T(0)
                          - hhat c Int X^(-theta);
- light tails:           ((1/2) bhat^2 cstar[phi^2] - hhat cstar[phi]) L_T(0),

where L_T(0) is the local time at the origin normalized so that its mean
is T^alpha / alpha.  In the light-tail regime the limit is explicit:
Fhat = (Gamma(alpha) max(0, Delta))^(1/alpha); the first two regimes get a
Feynman-Kac Monte Carlo estimator instead.

A note on the k-th coefficient of the light-tail expansion: two closed
forms circulate for its denominator, Gamma(alpha k) and
Gamma(alpha k + 1).  The Dirichlet integral over the ordered simplex gives

    Int_{0<t_1<...<t_k<T} prod (t_l - t_{l-1})^(alpha-1) dt
        = T^(alpha k) Gamma(alpha)^k / Gamma(alpha k + 1),

so the `+1` form is exact at k = 1 and is what the brute-force quadrature
reproduces at k <= 4; this module exports it as canonical and always
reports both (see ``coefficient_candidates``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq
from scipy.special import gammainc, gammaln, logsumexp

__all__ = [
    "REGIMES",
    "ContinuumParams",
    "ContinuumPhasePoint",
    "classify_regime",
    "bessel_i",
    "log_bessel_i",
    "bessel_density",
    "hat_g",
    "sharp_constant",
    "local_time_mean",
    "dirichlet_ik",
    "simplex_weight_integral",
    "CoefficientCandidates",
    "coefficient_candidates",
    "continuum_free_energy_short",
    "critical_exponent",
    "continuum_critical_curve",
    "ztilde_log",
    "ztilde_growth_rate",
    "McEstimate",
    "continuum_free_energy_mc",
    "mc_record",
]

REGIMES = ("long_range", "intermediate", "short_range")

# below this argument the power series for I_{-alpha} (all terms positive,
# no cancellation) is used; beyond it the large-argument expansion is both
# faster and safe from overflow in intermediate terms
SERIES_ARG_LIMIT = 30.0
_SERIES_RTOL = 1e-14


def classify_regime(alpha: float, theta: float) -> str:
    """Tail regime of the potential relative to the walk exponent.

    The crossover values theta = 1 - alpha and theta = 2(1 - alpha) separate
    genuinely different scaling limits and are rejected.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if theta <= 0.0:
        raise ValueError("theta must be positive")
    lo, hi = 1.0 - alpha, 2.0 * (1.0 - alpha)
    if abs(theta - lo) < 1e-12 or abs(theta - hi) < 1e-12:
        raise ValueError(f"theta = {theta} sits at a regime crossover")
    if theta < lo:
        return "long_range"
    if theta < hi:
        return "intermediate"
    return "short_range"


@dataclass(frozen=True)
class ContinuumParams:
    """Walk exponent, potential tail exponent, and tail constant."""

    alpha: float
    theta: float
    c_tail: float = 1.0

    def __post_init__(self):
        classify_regime(self.alpha, self.theta)  # validates alpha and theta
        if self.c_tail <= 0.0:
            raise ValueError("c_tail must be positive")

    @property
    def regime(self) -> str:
        return classify_regime(self.alpha, self.theta)


@dataclass(frozen=True)
class ContinuumPhasePoint:
    beta_hat: float
    h_hat: float

    def __post_init__(self):
        if self.beta_hat <= 0.0 or self.h_hat <= 0.0:
            raise ValueError("beta_hat and h_hat must be strictly positive")


# ------------------------------------------------------------ Bessel I

def _bessel_i_series(alpha: float, z: float) -> float:
    """Power series sum_m 1 / (m! Gamma(m+1-alpha)) (z/2)^(2m-alpha)."""
    half = 0.5 * z
    term = half ** (-alpha) / math.gamma(1.0 - alpha)
    acc = term
    for m in range(1, 400):
        term *= (half * half) / (m * (m - alpha))
        acc += term
        if term <= _SERIES_RTOL * acc:
            break
    return acc


def _log_bessel_i_asymptotic(alpha: float, z: float) -> float:
    """log of the large-argument expansion of I_nu for nu = -alpha:
    I_nu(z) ~ e^z / sqrt(2 pi z) * sum_m (-1)^m a_m / z^m."""
    mu = 4.0 * alpha * alpha
    acc = 1.0
    a = 1.0
    prev = math.inf
    for m in range(1, 12):
        a *= (mu - (2 * m - 1) ** 2) / (m * 8.0 * z)
        if abs(a) >= prev:
            break  # asymptotic terms started growing: stop at the optimum
        prev = abs(a)
        acc += -a if m % 2 else a
    return z - 0.5 * math.log(2.0 * math.pi * z) + math.log(acc)


def log_bessel_i(alpha: float, z: float) -> float:
    """log I_{-alpha}(z) for 0 < alpha < 1, z > 0; overflow-safe."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if z <= 0.0:
        raise ValueError("argument must be positive (the z -> 0 limit diverges)")
    if z <= SERIES_ARG_LIMIT:
        return math.log(_bessel_i_series(alpha, z))
    return _log_bessel_i_asymptotic(alpha, z)


def bessel_i(alpha: float, z: float) -> float:
    """Modified Bessel function I_{-alpha}(z) for 0 < alpha < 1, z > 0.

    This is the function entering the reflected-diffusion kernel: its
    series has all-positive terms (no cancellation) and shares the
    z -> 0 asymptote (2/z)^alpha / Gamma(1-alpha) with the ordinary
    Bessel function; at alpha = 1/2 it reduces to sqrt(2/(pi z)) cosh z,
    which is what the reflected-Brownian kernel requires.  Power series
    up to z = 30 (relative 1e-14 stopping), large-argument expansion
    beyond; overflows for z above ~700 — use log_bessel_i there.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if z <= 0.0:
        raise ValueError("argument must be positive (the z -> 0 limit diverges)")
    if z <= SERIES_ARG_LIMIT:
        return _bessel_i_series(alpha, z)
    return math.exp(_log_bessel_i_asymptotic(alpha, z))


# ------------------------------------------------------------- densities

def bessel_density(alpha: float, t: float, x: float, y: float) -> float:
    """Transition density g_t(x, y) of the reflected Bessel-like diffusion.

    Both arguments live on [0, infinity); the x = 0 (or y = 0) boundary
    uses the origin closed form, which is also the z -> 0 limit of the
    Bessel-function expression.
    """
    if t <= 0.0:
        raise ValueError("t must be positive")
    if x < 0.0 or y < 0.0:
        raise ValueError("x and y must be nonnegative")
    if x == 0.0 or y == 0.0:
        r = max(x, y)
        gauss = math.exp(-r * r / (2.0 * t))
        expo = 1.0 - 2.0 * alpha
        if r == 0.0:
            power = math.inf if expo < 0 else (1.0 if expo == 0 else 0.0)
        else:
            power = r**expo
        return (2.0**alpha / math.gamma(1.0 - alpha)) * power * t ** (alpha - 1.0) * gauss
    # combine the Gaussian factor with log I to stay finite at large xy/t,
    # where the two pieces cancel down to exp(-(x-y)^2/2t)
    log_val = (
        alpha * math.log(x)
        + (1.0 - alpha) * math.log(y)
        - math.log(t)
        - (x * x + y * y) / (2.0 * t)
        + log_bessel_i(alpha, x * y / t)
    )
    return math.exp(log_val)


def hat_g(alpha: float, t: float, x: float) -> float:
    """Sharp small-target kernel t^(alpha-1) e^(-x^2/2t)."""
    if t <= 0.0:
        raise ValueError("t must be positive")
    if x < 0.0:
        raise ValueError("x must be nonnegative")
    return t ** (alpha - 1.0) * math.exp(-x * x / (2.0 * t))


def sharp_constant(alpha: float) -> float:
    """Normalizer relating small-ball probabilities to hat_g:
    Gamma(2 - alpha) / 2^(alpha - 1)."""
    return math.gamma(2.0 - alpha) / 2.0 ** (alpha - 1.0)


def local_time_mean(alpha: float, T: float) -> float:
    """Mean of the origin local time: T^alpha / alpha."""
    if T < 0.0:
        raise ValueError("T must be nonnegative")
    return T**alpha / alpha


# ------------------------------------------------- Dirichlet simplex sums

def dirichlet_ik(theta_param: float, k: int) -> float:
    """Ordered-simplex integral of prod (s_l - s_{l-1})^(-theta) over
    0 < s_1 < ... < s_k < 1: Gamma(1-theta)^k / Gamma(k(1-theta) + 1)."""
    if not 0.0 < theta_param < 1.0:
        raise ValueError("theta_param must lie in (0, 1)")
    if k < 1:
        raise ValueError("k must be a positive integer")
    g = 1.0 - theta_param
    return math.exp(k * gammaln(g) - gammaln(k * g + 1.0))


def _simplex_level(alpha: float, T: float, t_prev: np.ndarray, depth: int,
                   nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # integral over t in (t_prev, T) of (t - t_prev)^(alpha-1) * next level;
    # substituting t = t_prev + u^(1/alpha) (T - t_prev) flattens the
    # integrable singularity, so plain Gauss-Legendre converges fast
    gap = (T - t_prev) ** alpha / alpha
    if depth == 1:
        return gap
    t_next = t_prev[..., None] + nodes ** (1.0 / alpha) * (T - t_prev)[..., None]
    inner = _simplex_level(alpha, T, t_next, depth - 1, nodes, weights)
    return gap * (inner @ weights)


def simplex_weight_integral(alpha: float, T: float, k: int,
                            n_nodes: int = 64) -> float:
    """Brute-force value of the ordered-simplex weight integral

        Int_{0<t_1<...<t_k<T} prod_{l=1}^{k} (t_l - t_{l-1})^(alpha-1) dt,

    the k-th moment kernel of the local-time expansion.  Cost grows like
    n_nodes^(k-1); supported for k <= 4.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if T <= 0.0:
        raise ValueError("T must be positive")
    if not 1 <= k <= 4:
        raise ValueError("brute-force simplex integration supports 1 <= k <= 4")
    x, w = leggauss(n_nodes)
    nodes = 0.5 * (x + 1.0)  # map to (0, 1)
    weights = 0.5 * w
    return float(_simplex_level(alpha, T, np.array(0.0), k, nodes, weights))


@dataclass(frozen=True)
class CoefficientCandidates:
    """Both closed forms of the k-th light-tail expansion coefficient.

    ``gamma_ak`` divides by Gamma(alpha k), ``gamma_ak_plus1`` by
    Gamma(alpha k + 1); they differ by the factor alpha k.  The brute-force
    simplex value (k <= 4, else None) settles which one the integral
    actually equals; ``canonical`` repeats the winner, the `+1` form.
    """

    k: int
    delta: float
    gamma_ak: float
    gamma_ak_plus1: float
    brute_force: float | None

    @property
    def canonical(self) -> float:
        return self.gamma_ak_plus1


def coefficient_candidates(params: ContinuumParams, cp: ContinuumPhasePoint,
                           cstar_phi: float, cstar_phi2: float, T: float,
                           k: int) -> CoefficientCandidates:
    """Light-tail expansion coefficient C_{T,k} = Delta^k * (simplex integral)."""
    if params.regime != "short_range":
        raise ValueError("closed-form coefficients require the short_range regime")
    if k < 1:
        raise ValueError("k must be a positive integer")
    alpha = params.alpha
    delta = 0.5 * cp.beta_hat**2 * cstar_phi2 - cp.h_hat * cstar_phi
    log_core = k * (alpha * math.log(T) + gammaln(alpha))
    base = delta**k
    gamma_ak = base * math.exp(log_core - gammaln(alpha * k))
    gamma_ak_plus1 = base * math.exp(log_core - gammaln(alpha * k + 1.0))
    brute = None
    if k <= 4:
        brute = base * simplex_weight_integral(alpha, T, k)
    return CoefficientCandidates(
        k=k, delta=delta, gamma_ak=gamma_ak,
        gamma_ak_plus1=gamma_ak_plus1, brute_force=brute,
    )


# -------------------------------------------------- free energy, light tail

def continuum_free_energy_short(params: ContinuumParams, cp: ContinuumPhasePoint,
                                cstar_phi: float, cstar_phi2: float) -> float:
    """Explicit light-tail free energy (Gamma(alpha) max(0, Delta))^(1/alpha)."""
    if params.regime != "short_range":
        raise ValueError("closed form valid only in the short_range regime")
    delta = 0.5 * cp.beta_hat**2 * cstar_phi2 - cp.h_hat * cstar_phi
    if delta <= 0.0:
        return 0.0
    return (math.gamma(params.alpha) * delta) ** (1.0 / params.alpha)


def critical_exponent(alpha: float, theta: float) -> float:
    """Power E in the continuum critical curve hhat_c = C bhat^E."""
    regime = classify_regime(alpha, theta)
    if regime == "long_range":
        return (2.0 - theta) / (1.0 - theta)
    if regime == "intermediate":
        return (2.0 - theta) / alpha
    return 2.0


def continuum_critical_curve(params: ContinuumParams, cstar_phi: float,
                             cstar_phi2: float, beta_hat: float,
                             T: float = 32.0, dt: float | None = None,
                             n_paths: int = 400, seed: int = 0) -> float:
    """Critical height of the continuum model: C * beta_hat^E.

    In the short_range regime the prefactor is the closed form
    cstar[phi^2] / (2 cstar[phi]).  In the other regimes C solves
    Fhat(1, C) = 0 and is located by root-solving the Monte Carlo
    estimator under common random numbers (wide error bars expected).
    """
    e = critical_exponent(params.alpha, params.theta)
    if params.regime == "short_range":
        return cstar_phi2 / (2.0 * cstar_phi) * beta_hat**e
    cfac = _mc_critical_prefactor(
        params, cstar_phi2, T=T, dt=dt, n_paths=n_paths, seed=seed
    )
    return cfac * beta_hat**e


def _mc_critical_prefactor(params: ContinuumParams, cstar_phi2: float, T: float,
                           dt: float | None, n_paths: int, seed: int) -> float:
    def f(h: float) -> float:
        est = continuum_free_energy_mc(
            params, ContinuumPhasePoint(1.0, h), T=T, dt=dt,
            n_paths=n_paths, seed=seed, cstar_phi2=cstar_phi2,
        )
        return est.estimate

    lo, hi = 1e-3, 1.0
    f_lo = f(lo)
    f_hi = f(hi)
    for _ in range(12):
        if f_hi < 0.0:
            break
        hi *= 2.0
        f_hi = f(hi)
    if f_lo <= 0.0 or f_hi >= 0.0:
        raise RuntimeError(
            f"critical-prefactor root not bracketed: f({lo}) = {f_lo}, "
            f"f({hi}) = {f_hi}"
        )
    return float(brentq(f, lo, hi, xtol=1e-3))


# ---------------------------------------------------------- series growth

def ztilde_log(mu: float, alpha: float, T: float) -> float:
    """log of the local-time moment series
    1 + sum_k (mu T^alpha Gamma(alpha))^k / Gamma(alpha k + 1).

    Terms peak near k ~ (mu Gamma(alpha))^(1/alpha) T / alpha and then
    decay super-exponentially; summation stops 60 nats past the peak.
    """
    if mu <= 0.0 or T <= 0.0:
        raise ValueError("mu and T must be positive")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    log_x = math.log(mu) + alpha * math.log(T) + gammaln(alpha)
    k_peak = max(8, int(math.ceil((mu * math.gamma(alpha)) ** (1.0 / alpha) * T / alpha)))
    terms = [0.0]  # k = 0
    k = 1
    best = 0.0
    while True:
        lt = k * log_x - gammaln(alpha * k + 1.0)
        terms.append(lt)
        best = max(best, lt)
        if k > k_peak and lt < best - 60.0:
            break
        if k > 100 * k_peak + 10_000:
            raise RuntimeError("series did not enter its decay range")
        k += 1
    return float(logsumexp(np.array(terms)))


def ztilde_growth_rate(mu: float, alpha: float, T: float) -> float:
    """(1/T) log of the moment series; approaches (mu Gamma(alpha))^(1/alpha)."""
    return ztilde_log(mu, alpha, T) / T


# ------------------------------------------------------------ Monte Carlo

@dataclass(frozen=True)
class McEstimate:
    estimate: float
    stderr: float
    flagged: bool
    n_paths: int
    T: float
    dt: float
    eps: float
    regime: str


def _simulate_paths(alpha: float, T: float, dt: float, theta: float,
                    n_paths: int, seed: int, eps: float,
                    spawn_base: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Paths of the squared process Y' = 2 sqrt(Y) dB + 2(1-alpha) dt via its
    exact transition law Y_{t+dt} = dt * noncentral_chi2(2(1-alpha), Y_t/dt);
    X = sqrt(Y) started at 0.

    Exact transitions make every grid marginal distributed exactly, so the
    mean of each Riemann sum below is the exact Riemann sum of the closed-
    form moment curve — no boundary discretization bias.  Returns per-path
    (occupation time of (0, eps], Int X^-theta dt, Int X^-2 theta dt) over
    (0, T].  X is floored at 1e-9 purely to keep the integrands finite;
    the floor sits so deep in the X -> 0 tail that reaching it has
    probability ~1e-10 per draw, leaving the moment means intact.

    Chi-square sampling consumes a variable number of uniforms, so draws
    are taken jointly across paths from per-STEP substreams keyed by
    (seed, spawn_base + step); results are deterministic for a fixed
    (seed, n_paths) and independent across steps.
    """
    n_steps = int(round(T / dt))
    if n_steps >= 2_000_000:
        raise ValueError("dt too small: step substreams would collide with "
                         "the bootstrap spawn range")
    df = 2.0 * (1.0 - alpha)
    floor = 1e-9
    y = np.zeros(n_paths)
    occ = np.zeros(n_paths)
    int_theta = np.zeros(n_paths)
    int_2theta = np.zeros(n_paths)
    for n in range(n_steps):
        gen = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(seed, spawn_key=(spawn_base + n,)))
        )
        y = dt * gen.noncentral_chisquare(df, y / dt)
        x = np.sqrt(y)
        occ += x <= eps
        xf = np.maximum(x, floor)
        int_theta += xf**-theta
        int_2theta += xf ** (-2.0 * theta)
    return occ * dt, int_theta * dt, int_2theta * dt


@lru_cache(maxsize=64)
def _local_time_calibration(alpha: float, T: float, dt: float, eps: float) -> float:
    """Exact factor making the eps-occupation estimator unbiased for the
    local time.

    Because the grid marginals are sampled exactly, the estimator's mean is
    known in closed form: P(X_t <= eps) is a regularized incomplete gamma
    of the origin density, so the eps-truncation bias can be divided out
    analytically rather than estimated from pilot runs.
    """
    n_steps = int(round(T / dt))
    ts = dt * np.arange(1, n_steps + 1)
    expected_occ = dt * float(gammainc(1.0 - alpha, eps * eps / (2.0 * ts)).sum())
    prefactor = sharp_constant(alpha) / eps ** (2.0 * (1.0 - alpha))
    return local_time_mean(alpha, T) / (prefactor * expected_occ)


def continuum_free_energy_mc(params: ContinuumParams, cp: ContinuumPhasePoint,
                             T: float, dt: float | None = None,
                             n_paths: int = 400, seed: int = 0,
                             eps: float | None = None,
                             n_bootstrap: int = 200,
                             cstar_phi2: float = 1.0) -> McEstimate:
    """Feynman-Kac Monte Carlo for the heavy- and intermediate-tail
    free-energy functionals: (1/T) log of the empirical exponential mean,
    with a bootstrap standard error.

    In the intermediate regime the local-time term carries the lattice
    constant cstar_phi2 (the heavy-tail functional needs only c_tail).
    The local time enters through the eps-occupation estimator with an
    analytic unbiasing factor (see _local_time_calibration).  The estimate
    is flagged when the heaviest path carries over half the total weight
    (variance explosion).
    """
    if params.regime == "short_range":
        raise ValueError(
            "short_range has the explicit formula; use continuum_free_energy_short"
        )
    if T <= 0.0:
        raise ValueError("T must be positive")
    if dt is None:
        dt = 1e-4 * T
    if eps is None:
        eps = max(math.sqrt(dt), 1e-3)
    alpha, theta = params.alpha, params.theta
    occ, int_theta, int_2theta = _simulate_paths(
        alpha, T, dt, theta, n_paths, seed, eps, spawn_base=0
    )
    if params.regime == "long_range":
        exponents = (
            0.5 * cp.beta_hat**2 * params.c_tail**2 * int_2theta
            - cp.h_hat * params.c_tail * int_theta
        )
    else:
        cal = _local_time_calibration(alpha, T, dt, eps)
        prefactor = sharp_constant(alpha) / eps ** (2.0 * (1.0 - alpha))
        local_time = cal * prefactor * occ
        exponents = (
            0.5 * cp.beta_hat**2 * cstar_phi2 * local_time
            - cp.h_hat * params.c_tail * int_theta
        )
    shifted = exponents - exponents.max()
    weights = np.exp(shifted)
    total = float(weights.sum())
    flagged = bool(weights.max() / total > 0.5)
    estimate = float((exponents.max() + math.log(total / n_paths)) / T)
    boot_gen = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(2_000_000,)))
    )
    idx = boot_gen.integers(0, n_paths, size=(n_bootstrap, n_paths))
    boot = logsumexp(exponents[idx], axis=1) - math.log(n_paths)
    stderr = float(np.std(boot / T, ddof=1))
    return McEstimate(
        estimate=estimate, stderr=stderr, flagged=flagged, n_paths=n_paths,
        T=T, dt=dt, eps=eps, regime=params.regime,
    )


def mc_record(params: ContinuumParams, cp: ContinuumPhasePoint,
              est: McEstimate) -> dict:
    """JSON-ready record of a Monte Carlo run."""
    return {
        "alpha": params.alpha,
        "theta": params.theta,
        "beta_hat": cp.beta_hat,
        "h_hat": cp.h_hat,
        "T": est.T,
        "dt": est.dt,
        "n_paths": est.n_paths,
        "estimate": est.estimate,
        "stderr": est.stderr,
        "flagged": est.flagged,
    }
