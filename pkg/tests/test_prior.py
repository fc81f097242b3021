import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from addgp.gp import ComponentHyper, InclusionVector, ModelState, make_state
from addgp.prior import (
    PriorConfig,
    PriorDomainError,
    check_state,
    k_pmf,
    log_prior_A,
    log_prior_B,
    log_prior_K,
    log_prior_L,
    log_prior_mu,
    log_prior_sigma,
    log_prior_state,
    sample_prior,
    size_pmf,
)
from oracles import all_masks


def test_mask_prior_p2():
    cfg = PriorConfig(2, D0=2)
    probs = {b: math.exp(log_prior_B(InclusionVector(b, 2), cfg)) for b in all_masks(2, 2)}
    # every admissible mask has weight (1/2)^2 under Bernoulli(1/2) bits
    for b in [(0,), (1,), (0, 1)]:
        assert probs[b] == pytest.approx(1 / 3, rel=1e-14)


@pytest.mark.parametrize("p,D0", [(1, 1), (3, 2), (5, 3), (8, 8), (12, 3), (12, 5)])
def test_mask_prior_normalized(p, D0):
    cfg = PriorConfig(p, D0=D0)
    total = sum(math.exp(log_prior_B(InclusionVector(b, p), cfg)) for b in all_masks(p, D0))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_mask_prior_exchangeable():
    cfg = PriorConfig(10, D0=3)
    assert log_prior_B(InclusionVector((0, 4), 10), cfg) == log_prior_B(InclusionVector((7, 9), 10), cfg)


def test_mask_prior_domain():
    with pytest.raises(PriorDomainError):
        log_prior_B(InclusionVector(tuple(range(6)), 100), PriorConfig(100, D0=5))


def test_A_prior_values():
    cfg = PriorConfig(5)
    assert log_prior_A(0.7, 1, cfg) == pytest.approx(-0.7, rel=1e-14)
    assert log_prior_A(1.0, 2, cfg) == pytest.approx(math.log(2) - 1, rel=1e-14)
    with pytest.raises(PriorDomainError):
        log_prior_A(0.0, 1, cfg)


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("a1,a2", [(1.0, 1.0), (2.5, 0.7)])
def test_A_prior_integrates_to_one(d, a1, a2):
    cfg = PriorConfig(10, D0=5, a1=a1, a2=a2)
    mass, _ = integrate.quad(lambda a: math.exp(log_prior_A(a, d, cfg)), 0, 50, limit=200, points=[0.5, 1, 2])
    assert mass == pytest.approx(1.0, abs=1e-6)


def test_state_prior_term_by_term():
    cfg = PriorConfig(6, D0=3)
    s = make_state([(0.8, 1.4, [1, 4])], 6, mu=1.5, sigma=0.9)
    b = InclusionVector((1, 4), 6)
    expected = (
        log_prior_B(b, cfg)
        + log_prior_A(1.4, 2, cfg)
        + (math.log(2) - 0.5 * math.log(2 * math.pi) - 0.32)
        + math.log(0.5 / (1 - 0.5**5))
        + stats.norm(0, 10).logpdf(1.5)
        - math.log(4.95)
    )
    assert log_prior_state(s, cfg) == pytest.approx(expected, abs=1e-12)


def test_state_prior_permutation_and_support():
    cfg = PriorConfig(6)
    s = make_state([(0.8, 1.4, [1, 4]), (1.2, 0.5, [0])], 6, mu=0.1, sigma=1.0)
    t = ModelState(s.components[::-1], s.mu, s.sigma)
    assert log_prior_state(s, cfg) == log_prior_state(t, cfg)
    with pytest.raises(PriorDomainError, match="sigma"):
        log_prior_state(ModelState(s.components, 0.0, 6.0), cfg)
    with pytest.raises(PriorDomainError, match="K="):
        log_prior_state(ModelState(s.components * 3, 0.0, 1.0), PriorConfig(6, K0=5))


def test_K_pmf_normalized():
    cfg = PriorConfig(4, K0=7, k_ratio=0.3)
    assert k_pmf(cfg).sum() == pytest.approx(1.0, abs=1e-14)


def test_sampler_matches_analytic_laws():
    cfg = PriorConfig(20, D0=3)
    rng = np.random.default_rng(7)
    draws = [sample_prior(cfg, rng) for _ in range(50_000)]
    sizes = np.array([c.B.popcount for s in draws for c in s.components])
    obs = np.bincount(sizes, minlength=4)[1:]
    _, pval = stats.chisquare(obs, obs.sum() * size_pmf(cfg))
    assert pval > 0.01
    Ks = np.array([s.K for s in draws])
    obs = np.bincount(Ks, minlength=cfg.K0 + 1)[1:]
    _, pval = stats.chisquare(obs, obs.sum() * k_pmf(cfg))
    assert pval > 0.01
    for s in draws[:2000]:
        assert np.isfinite(log_prior_state(s, cfg))


def test_sampler_deterministic():
    cfg = PriorConfig(8)
    assert sample_prior(cfg, 42) == sample_prior(cfg, 42)


@given(st.integers(1, 30), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_prior_draws_valid(p, D0, seed):
    cfg = PriorConfig(p, D0=D0)
    s = sample_prior(cfg, seed)
    check_state(s, cfg)
    assert 1 <= s.K <= cfg.K0
    assert all(1 <= c.B.popcount <= cfg.dmax for c in s.components)


def test_config_roundtrip():
    cfg = PriorConfig(9, D0=2, a1=2.0, k_ratio=0.25)
    assert PriorConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        PriorConfig(3, sigma_lo=2.0, sigma_hi=1.0)
