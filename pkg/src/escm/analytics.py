"""Closed-form and quadrature models for link success, consensus overhead and attacks.

Everything here is a pure function of its arguments (plus an explicit
generator for the Monte-Carlo estimate of the internal-attack probability);
the simulator never feeds back into these results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np
from scipy import integrate, special

LIGHT_SPEED = 2.998e8

LITERAL_CLAMPED = "literal_clamped"
DISABLED = "disabled"
DOPPLER_MODES = (LITERAL_CLAMPED, DISABLED)

EXPECTATION_UNIFORM = "expectation_uniform"


def _finite(name, value):
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")


@dataclass(frozen=True)
class ChannelParams:
    """Rayleigh link budget plus the drone population the link is averaged over.

    ``density`` is drones per square meter and ``node_count`` the number of
    candidate drones; together they fix the disc radius sqrt(k / (pi * density)).
    """

    transmit_power: float = 0.5
    noise_power: float = 0.1
    path_loss_exponent: float = 2.0
    snr_threshold_db: float = 6.0
    density: float = 2.0
    node_count: int = 10

    def __post_init__(self):
        for name in ("transmit_power", "noise_power", "path_loss_exponent", "density"):
            _finite(name, getattr(self, name))
        if math.isnan(self.snr_threshold_db) or self.snr_threshold_db == math.inf:
            raise ValueError("snr_threshold_db must be finite or -inf")
        if self.transmit_power <= 0:
            raise ValueError("transmit_power must be > 0")
        if self.noise_power < 0:
            raise ValueError("noise_power must be >= 0")
        if self.path_loss_exponent < 1:
            raise ValueError("path_loss_exponent must be >= 1")
        if self.density <= 0:
            raise ValueError("density must be > 0")
        if int(self.node_count) != self.node_count or self.node_count < 1:
            raise ValueError("node_count must be an integer >= 1")

    @property
    def snr_threshold(self) -> float:
        """Linear SNR threshold."""
        return 10.0 ** (self.snr_threshold_db / 10.0)

    @property
    def radius(self) -> float:
        return math.sqrt(self.node_count / (math.pi * self.density))


@dataclass(frozen=True)
class MobilityParams:
    relative_speed: float = 3.0
    elapsed_time: float = 10.0
    light_speed: float = LIGHT_SPEED
    doppler_mode: str = LITERAL_CLAMPED

    def __post_init__(self):
        for name in ("relative_speed", "elapsed_time", "light_speed"):
            _finite(name, getattr(self, name))
        if self.relative_speed < 0 or self.elapsed_time < 0:
            raise ValueError("relative_speed and elapsed_time must be >= 0")
        if self.light_speed <= 0:
            raise ValueError("light_speed must be > 0")
        if self.doppler_mode not in DOPPLER_MODES:
            raise ValueError(f"doppler_mode must be one of {DOPPLER_MODES}")

    @property
    def max_displacement(self) -> float:
        return self.relative_speed * self.elapsed_time


@dataclass(frozen=True)
class FixedOffset:
    """Evaluate the mobile success rate at one displacement d in [-vt, vt]."""

    d: float


@dataclass(frozen=True)
class DsaParams:
    p_m: float
    p_h: float = 1.0
    z_blocks: int = 0

    def __post_init__(self):
        if not 0 <= self.p_m <= 1:
            raise ValueError("p_m must lie in [0, 1]")
        if not 0 <= self.p_h <= 1:
            raise ValueError("p_h must lie in [0, 1]")
        if self.p_h == 0 and self.p_m == 0:
            raise ValueError("p_h must be > 0")
        if int(self.z_blocks) != self.z_blocks or self.z_blocks < 0:
            raise ValueError("z_blocks must be a non-negative integer")

    @property
    def ratio(self) -> float:
        return self.p_m / self.p_h

    @property
    def lambda_dsa(self) -> float:
        """Expected number of malicious blocks while honest nodes build z."""
        return self.z_blocks * self.ratio


@dataclass(frozen=True)
class InternalAttackParams:
    total_drones: int
    malicious_count: int
    committee_size: int
    cr_mean: float = 200.0
    cr_std: float = 50.0
    cr_min: float = 100.0
    cr_max: float = 300.0

    def __post_init__(self):
        if self.total_drones < 1:
            raise ValueError("total_drones must be >= 1")
        if not 0 <= self.malicious_count <= self.total_drones:
            raise ValueError("malicious_count must lie in [0, total_drones]")
        if self.committee_size > self.total_drones:
            raise ValueError("committee_size cannot exceed total_drones")
        if self.committee_size < 1:
            raise ValueError("committee_size must be >= 1")
        if not (0 < self.cr_min < self.cr_max) or self.cr_std <= 0:
            raise ValueError("computing-resource distribution needs 0 < cr_min < cr_max and cr_std > 0")


# --- link success ---------------------------------------------------------

def static_success_rate(p: ChannelParams) -> float:
    """Mean Pr[SNR > z] for a receiver uniform on the disc of radius R.

    Integrated on u = r / R so the quadrature nodes do not move with R.
    """
    z = p.snr_threshold
    c = p.noise_power * z / p.transmit_power
    if c == 0.0:
        return 1.0
    R = p.radius
    val, _ = integrate.quad(
        lambda u: math.exp(-c * (R * u) ** p.path_loss_exponent) * u,
        0.0, 1.0, epsabs=1e-11, epsrel=1e-11, limit=200,
    )
    return min(1.0, max(0.0, 2.0 * val))


def average_doppler_power(transmit_power: float, m: MobilityParams) -> float:
    """Doppler-averaged signal power.

    The literal expression (P_T^2 / pi) * asin(c / v) has c / v > 1 for every
    physical speed, so the argument is clamped to 1, which yields P_T^2 / 2.
    """
    if m.doppler_mode == DISABLED:
        return transmit_power
    ratio = 1.0 if m.relative_speed == 0 else min(m.light_speed / m.relative_speed, 1.0)
    return transmit_power ** 2 / math.pi * math.asin(ratio)


def _abs_power_integral(x: float, c: float, alpha: float) -> float:
    """Signed integral of exp(-c |u|^alpha) du from 0 to x."""
    if x == 0.0:
        return 0.0
    ax = abs(x)
    val = special.gamma(1.0 / alpha) * special.gammainc(1.0 / alpha, c * ax ** alpha) / (alpha * c ** (1.0 / alpha))
    return math.copysign(val, x)


def mobile_success_rate(
    p: ChannelParams,
    m: MobilityParams,
    displacement: Union[str, FixedOffset] = EXPECTATION_UNIFORM,
) -> float:
    """Success rate when the link distance drifts to |r + d| and power is Doppler-averaged.

    The default averages over d ~ Uniform[-vt, vt]; that inner average has the
    closed form (G(r + vt) - G(r - vt)) / 2vt with G the antiderivative of
    exp(-c |u|^alpha), leaving one adaptive quadrature over r.
    """
    p_av = average_doppler_power(p.transmit_power, m)
    c = p.noise_power * p.snr_threshold / p_av
    vt = m.max_displacement
    alpha = p.path_loss_exponent
    if isinstance(displacement, FixedOffset):
        d = displacement.d
        if abs(d) > vt:
            raise ValueError(f"offset {d} lies outside [-{vt}, {vt}]")
    elif displacement == EXPECTATION_UNIFORM:
        d = None
    else:
        raise ValueError(f"unknown displacement mode {displacement!r}")
    if c == 0.0:
        return 1.0
    R = p.radius

    if d is not None or vt == 0.0:
        off = 0.0 if d is None else d

        def integrand(u):
            return math.exp(-c * abs(R * u + off) ** alpha) * u
    else:
        def integrand(u):
            r = R * u
            inner = (_abs_power_integral(r + vt, c, alpha) - _abs_power_integral(r - vt, c, alpha)) / (2.0 * vt)
            return inner * u

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-11, epsrel=1e-10, limit=200)
    return min(1.0, max(0.0, 2.0 * val))


# --- consensus overhead ---------------------------------------------------

def ponc_overhead(k: int) -> int:
    """Proposal fan-out k(k-1), all-pairs views k^2, winner broadcast k-1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return k * (k - 1) + k * k + (k - 1)


def poso_overhead(k: int) -> Fraction:
    """Average sequential-verification cost, (k/2) * [(k-1) + (k-1)^2 + (k-1)]."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return Fraction(k, 2) * ((k - 1) + (k - 1) ** 2 + (k - 1))


# --- attacks --------------------------------------------------------------

def dsa_success_probability(d: DsaParams) -> float:
    """Probability that a malicious chain catches up from z blocks behind."""
    if d.p_h <= d.p_m:
        return 1.0
    ratio = d.ratio
    lam = d.lambda_dsa
    z = int(d.z_blocks)
    total = 0.0
    for i in range(z + 1):
        if lam == 0.0:
            pois = 1.0 if i == 0 else 0.0
        else:
            pois = math.exp(i * math.log(lam) - lam - math.lgamma(i + 1))
        total += pois * (1.0 - ratio ** (z - i))
    return min(1.0, max(0.0, 1.0 - total))


def _support(N, X, k):
    return range(max(0, k - (N - X)), min(k, X) + 1)


def hypergeometric_pmf(x: int, N: int, X: int, k: int) -> float:
    """Pr[x malicious in a committee of k drawn from N with X malicious], via log-factorials."""
    if x not in _support(N, X, k):
        return 0.0

    def lcomb(n, r):
        return math.lgamma(n + 1) - math.lgamma(r + 1) - math.lgamma(n - r + 1)

    return math.exp(lcomb(X, x) + lcomb(N - X, k - x) - lcomb(N, k))


def hypergeometric_pmf_exact(x: int, N: int, X: int, k: int) -> Fraction:
    if x not in _support(N, X, k):
        return Fraction(0)
    return Fraction(math.comb(X, x) * math.comb(N - X, k - x), math.comb(N, k))


def truncated_normal(rng: np.random.Generator, mean, std, lo, hi, size) -> np.ndarray:
    """Gaussian draws restricted to [lo, hi] by rejection."""
    size = tuple(np.atleast_1d(size))
    out = np.empty(int(np.prod(size)))
    filled = 0
    while filled < out.size:
        need = out.size - filled
        draw = rng.normal(mean, std, size=max(16, int(need * 1.3) + 8))
        draw = draw[(draw >= lo) & (draw <= hi)][:need]
        out[filled:filled + draw.size] = draw
        filled += draw.size
    return out.reshape(size)


def internal_attack_probability(p: InternalAttackParams, trials: int, rng) -> float:
    """Monte-Carlo Pr[malicious committee members hold >= 50% of committee CR].

    The malicious head-count is drawn exactly from the hypergeometric law and
    every member's CR from the truncated Gaussian.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng)
    N, X, k = p.total_drones, p.malicious_count, p.committee_size
    if X == 0:
        return 0.0
    x = rng.hypergeometric(X, N - X, k, size=trials)
    cr = truncated_normal(rng, p.cr_mean, p.cr_std, p.cr_min, p.cr_max, (trials, k))
    malicious = np.arange(k)[None, :] < x[:, None]
    mal_cr = np.where(malicious, cr, 0.0).sum(axis=1)
    return float(np.mean(mal_cr >= 0.5 * cr.sum(axis=1)))
