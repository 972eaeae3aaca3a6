import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from escm.analytics import (
    DISABLED,
    LIGHT_SPEED,
    ChannelParams,
    DsaParams,
    FixedOffset,
    InternalAttackParams,
    MobilityParams,
    average_doppler_power,
    dsa_success_probability,
    hypergeometric_pmf,
    hypergeometric_pmf_exact,
    internal_attack_probability,
    mobile_success_rate,
    ponc_overhead,
    poso_overhead,
    static_success_rate,
)

import oracles

SEC3 = dict(transmit_power=0.5, noise_power=0.1, path_loss_exponent=2.0, snr_threshold_db=6.0)


# --- static success -------------------------------------------------------

def test_static_unit_when_threshold_vanishes():
    assert static_success_rate(ChannelParams(snr_threshold_db=-math.inf)) == 1.0
    assert static_success_rate(ChannelParams(noise_power=0.0)) == 1.0


def test_static_matches_monte_carlo_reference_point():
    p = ChannelParams(**SEC3, density=2.0, node_count=10)
    est, se = oracles.static_success_mc(0.5, 0.1, 2.0, 6.0, 2.0, 10, 10**6, np.random.default_rng(1))
    assert abs(static_success_rate(p) - est) <= 3 * se


def test_static_not_monotone_in_path_loss_near_field():
    # part of the disc lies inside r < 1 where a larger exponent helps
    rates = [static_success_rate(ChannelParams(path_loss_exponent=a)) for a in (1.0, 2.0, 3.0)]
    assert rates[0] < rates[1] < rates[2]


def test_static_alpha2_closed_form():
    # with alpha = 2 the integral is elementary: (1 - exp(-c R^2)) / (c R^2)
    p = ChannelParams(**SEC3, density=2.0, node_count=10)
    c = 0.1 * 10 ** 0.6 / 0.5
    x = c * p.radius ** 2
    assert static_success_rate(p) == pytest.approx((1 - math.exp(-x)) / x, abs=1e-9)


@pytest.mark.parametrize(
    "field, values, direction",
    [
        ("snr_threshold_db", [-3, 0, 3, 6, 9], -1),
        ("noise_power", [0.01, 0.05, 0.1, 0.3], -1),
        ("node_count", [1, 3, 8, 20, 50], -1),
        ("transmit_power", [0.1, 0.5, 1.0, 3.0], +1),
        ("density", [0.2, 1.0, 2.0, 5.0], +1),
    ],
)
def test_static_monotone_in_each_parameter(field, values, direction):
    base = dict(SEC3, density=2.0, node_count=10)
    rates = [static_success_rate(ChannelParams(**{**base, field: v})) for v in values]
    for a, b in zip(rates, rates[1:]):
        assert direction * (b - a) >= -1e-12


def test_channel_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(node_count=0)
    with pytest.raises(ValueError):
        ChannelParams(transmit_power=math.nan)
    with pytest.raises(ValueError):
        ChannelParams(noise_power=math.inf)


# --- Doppler power --------------------------------------------------------

def test_doppler_power_literal_clamped():
    assert average_doppler_power(0.5, MobilityParams(relative_speed=3.0)) == pytest.approx(0.125)
    assert average_doppler_power(0.5, MobilityParams(relative_speed=LIGHT_SPEED)) == pytest.approx(0.125)
    # only a faster-than-light speed leaves the clamp
    assert average_doppler_power(0.5, MobilityParams(relative_speed=2 * LIGHT_SPEED)) < 0.125
    assert average_doppler_power(1.0, MobilityParams(relative_speed=5.0)) == pytest.approx(0.5)


def test_doppler_power_disabled():
    assert average_doppler_power(0.5, MobilityParams(relative_speed=0.0, doppler_mode=DISABLED)) == 0.5


# --- mobile success -------------------------------------------------------

def test_mobile_degenerates_to_static():
    p = ChannelParams(**SEC3, density=2.0, node_count=10)
    m = MobilityParams(relative_speed=0.0, elapsed_time=10.0, doppler_mode=DISABLED)
    assert mobile_success_rate(p, m) == pytest.approx(static_success_rate(p), abs=1e-9)
    assert mobile_success_rate(p, m, FixedOffset(0.0)) == pytest.approx(static_success_rate(p), abs=1e-9)


def test_mobile_rejects_offset_outside_bound():
    p = ChannelParams(**SEC3)
    with pytest.raises(ValueError):
        mobile_success_rate(p, MobilityParams(relative_speed=1.0, elapsed_time=2.0), FixedOffset(2.5))


def test_mobile_curve_non_increasing_in_k():
    m = MobilityParams(relative_speed=3.0, elapsed_time=10.0)
    curve = [mobile_success_rate(ChannelParams(**SEC3, density=2.0, node_count=k), m) for k in range(2, 21)]
    assert all(b <= a for a, b in zip(curve, curve[1:]))


def test_mobile_faster_is_worse():
    p = ChannelParams(**SEC3, density=5.0, node_count=10)
    slow = mobile_success_rate(p, MobilityParams(relative_speed=3.0, elapsed_time=10.0))
    fast = mobile_success_rate(p, MobilityParams(relative_speed=5.0, elapsed_time=10.0))
    assert fast <= slow


@pytest.mark.parametrize(
    "params",
    [
        dict(SEC3, density=5.0, node_count=10, v=3.0, t=10.0),
        dict(SEC3, density=5.0, node_count=10, v=5.0, t=10.0),
        dict(transmit_power=1.0, noise_power=0.05, path_loss_exponent=2.5, snr_threshold_db=3.0,
             density=0.5, node_count=8, v=0.2, t=2.0),
        dict(transmit_power=2.0, noise_power=0.02, path_loss_exponent=3.0, snr_threshold_db=0.0,
             density=0.3, node_count=12, v=0.5, t=1.0),
    ],
)
def test_mobile_matches_monte_carlo(params):
    v, t = params.pop("v"), params.pop("t")
    p = ChannelParams(**params)
    m = MobilityParams(relative_speed=v, elapsed_time=t)
    est, se = oracles.mobile_success_mc(
        p.transmit_power, p.noise_power, p.path_loss_exponent, p.snr_threshold_db,
        p.density, p.node_count, v, t, 10**6, np.random.default_rng(17),
    )
    assert abs(mobile_success_rate(p, m) - est) <= max(3 * se, 1e-4)


def test_mobile_below_static_when_doppler_power_drops():
    # P_av = P_T^2 / 2 < P_T exactly when P_T < 2
    for P_T in (0.3, 0.5, 1.0, 1.9):
        p = ChannelParams(transmit_power=P_T, noise_power=0.1, snr_threshold_db=6.0, density=1.0, node_count=6)
        m = MobilityParams(relative_speed=4.0, elapsed_time=3.0)
        assert average_doppler_power(P_T, m) < P_T
        assert mobile_success_rate(p, m, FixedOffset(0.0)) <= static_success_rate(p)


# --- overhead -------------------------------------------------------------

def test_ponc_overhead_values():
    assert [ponc_overhead(k) for k in (1, 5, 10)] == [1, 49, 199]


def test_poso_overhead_values():
    assert poso_overhead(1) == 0
    assert poso_overhead(5) == 60
    assert poso_overhead(3) == 12
    assert isinstance(poso_overhead(4), Fraction)


def test_overhead_crossover():
    for k in (3, 4):
        assert ponc_overhead(k) > poso_overhead(k)
    for k in range(5, 60):
        assert ponc_overhead(k) < poso_overhead(k)


# --- double spend ---------------------------------------------------------

def test_dsa_edge_cases():
    assert dsa_success_probability(DsaParams(p_m=0.1, p_h=1.0, z_blocks=0)) == 1.0
    assert dsa_success_probability(DsaParams(p_m=0.0, p_h=1.0, z_blocks=3)) == 0.0
    assert dsa_success_probability(DsaParams(p_m=0.6, p_h=0.5, z_blocks=9)) == 1.0
    assert dsa_success_probability(DsaParams(p_m=0.5, p_h=0.5, z_blocks=9)) == 1.0


def test_dsa_matches_race_oracle_and_decreases():
    rng = np.random.default_rng(4)
    values = [dsa_success_probability(DsaParams(p_m=0.1, p_h=1.0, z_blocks=z)) for z in range(1, 11)]
    assert all(b < a for a, b in zip(values, values[1:]))
    for z, val in zip(range(1, 11), values):
        assert abs(val - oracles.dsa_race_mc(0.1, 1.0, z, 100_000, rng)) <= 1e-2


@settings(max_examples=80, deadline=None)
@given(
    ratio=st.floats(0.0, 0.95),
    bump=st.floats(0.0, 0.05),
    z=st.integers(0, 30),
)
def test_dsa_monotone_properties(ratio, bump, z):
    here = dsa_success_probability(DsaParams(p_m=ratio, p_h=1.0, z_blocks=z))
    deeper = dsa_success_probability(DsaParams(p_m=ratio, p_h=1.0, z_blocks=z + 1))
    riskier = dsa_success_probability(DsaParams(p_m=min(1.0, ratio + bump), p_h=1.0, z_blocks=z))
    assert 0.0 <= here <= 1.0
    assert deeper <= here + 1e-12
    assert riskier >= here - 1e-12


# --- internal attack ------------------------------------------------------

@pytest.mark.parametrize("N, X, k", [(10, 2, 3), (12, 5, 4), (50, 10, 5), (50, 25, 15), (7, 7, 7)])
def test_hypergeometric_sums_to_one(N, X, k):
    support = range(max(0, k - (N - X)), min(k, X) + 1)
    assert abs(sum(hypergeometric_pmf(x, N, X, k) for x in support) - 1.0) <= 1e-12
    assert sum(hypergeometric_pmf_exact(x, N, X, k) for x in support) == 1


def test_hypergeometric_exact_matches_log_factorial():
    for x in range(0, 4):
        assert hypergeometric_pmf(x, 10, 2, 3) == pytest.approx(float(hypergeometric_pmf_exact(x, 10, 2, 3)), rel=1e-12)


def test_internal_attack_trivial_ends():
    assert internal_attack_probability(InternalAttackParams(20, 0, 5), 1000, 0) == 0.0
    assert internal_attack_probability(InternalAttackParams(6, 6, 6), 1000, 0) == 1.0


def test_internal_attack_rejects_oversized_committee():
    with pytest.raises(ValueError):
        InternalAttackParams(5, 1, 6)


def test_internal_attack_matches_enumeration_small_instance():
    exact, _ = oracles.internal_attack_enumeration(10, 2, 3)
    est = internal_attack_probability(InternalAttackParams(10, 2, 3), 200_000, 123)
    assert abs(est - exact) <= 2e-2


def test_internal_attack_reproducible():
    p = InternalAttackParams(50, 10, 5)
    assert internal_attack_probability(p, 5000, 9) == internal_attack_probability(p, 5000, 9)
