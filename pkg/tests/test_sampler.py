import itertools
import math

import numpy as np
import pytest

from addgp.data import Dataset
from addgp.design import DesignSpec
from addgp.gp import InclusionVector, make_state, predict
from addgp.prior import PriorConfig, check_state, derive_seed, prior_inclusion_probability
from addgp.sampler import (
    MOVES,
    ChainRecord,
    SamplerConfig,
    inclusion_probabilities,
    posterior_mean,
    propose_mask,
    run_chain,
    step,
)
from addgp.sim import AdditiveTruthSpec, TruthComponent, gen_dataset
from oracles import dense_predict


def only(move):
    return tuple(1.0 if m == move else 0.0 for m in MOVES)


@pytest.fixture(scope="module")
def smoke():
    truth = AdditiveTruthSpec(3, (TruthComponent((0,), 1.0, 2.0),))
    return gen_dataset(DesignSpec(3), truth, 60, 0.5, 0.1, 1)


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(move_probs=(0.5,) * 7)
    with pytest.raises(ValueError):
        SamplerConfig(n_iter=10, n_burn=10)
    cfg = SamplerConfig(n_iter=50, n_burn=10, thin=3, seed=4)
    assert SamplerConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.n_kept == 14


def test_death_at_one_component_rejected(smoke):
    prior = PriorConfig(3)
    s = make_state([(1.0, 1.0, [0])], 3, mu=0.5, sigma=0.3)
    chain = run_chain(smoke, prior, SamplerConfig(n_iter=20, n_burn=0, thin=1, move_probs=only("death")), init=s)
    assert chain.acceptance["death"] == (20, 0)
    assert all(st == s for st in chain.states)
    assert step(s, smoke, prior, SamplerConfig(move_probs=only("death")), np.random.default_rng(0)) == s


def test_birth_at_K0_rejected(smoke):
    prior = PriorConfig(3, K0=2)
    s = make_state([(1.0, 1.0, [0]), (0.5, 1.0, [1])], 3, mu=0.5, sigma=0.3)
    chain = run_chain(smoke, prior, SamplerConfig(n_iter=10, n_burn=0, thin=1, move_probs=only("birth")), init=s)
    assert chain.acceptance["birth"][1] == 0


def test_deterministic(smoke):
    cfg = SamplerConfig(n_iter=300, n_burn=50, thin=2, seed=11)
    a = run_chain(smoke, PriorConfig(3), cfg)
    b = run_chain(smoke, PriorConfig(3), cfg)
    assert a.states == b.states
    assert np.array_equal(a.log_posts, b.log_posts)
    assert a.acceptance == b.acceptance


def test_states_valid_and_trace_finite(smoke):
    prior = PriorConfig(3, D0=2, K0=3)
    chain = run_chain(smoke, prior, SamplerConfig(n_iter=3000, n_burn=500, thin=1, seed=2))
    for s in chain.states:
        check_state(s, prior)
    assert np.all(np.isfinite(chain.log_posts))
    for rate in chain.acceptance_rates().values():
        assert 0.0 <= rate <= 1.0


def test_prior_only_states_valid_long_run():
    prior = PriorConfig(6, D0=2, K0=4)
    chain = run_chain(Dataset.empty(6), prior, SamplerConfig(n_iter=100_000, n_burn=0, thin=10, seed=5))
    for s in chain.states:
        check_state(s, prior)


def test_rw_acceptance_guard(smoke):
    rates = run_chain(smoke, PriorConfig(3), SamplerConfig(n_iter=4000, n_burn=1000, seed=3)).acceptance_rates()
    for m in ("A", "L", "sigma"):
        assert 0.1 <= rates[m] <= 0.6, (m, rates[m])


def test_mask_proposal_symmetric():
    p, D0 = 5, 3
    masks = [InclusionVector(b, p) for r in range(1, D0 + 1) for b in itertools.combinations(range(p), r)]
    n_draw = 4000
    freq = {}
    for b in masks[:6] + masks[-4:]:
        rng = np.random.default_rng(hash(b.idx) % 2**32)
        counts = {}
        for _ in range(n_draw):
            nb = propose_mask(b, D0, rng)
            counts[nb.idx] = counts.get(nb.idx, 0) + 1
        freq[b.idx] = counts
        for nb in counts:
            assert 1 <= len(nb) <= D0
    for a, ca in freq.items():
        for b, n_ab in ca.items():
            if b in freq:
                n_ba = freq[b].get(a, 0)
                assert abs(n_ab - n_ba) < 5 * math.sqrt(n_ab + n_ba + 1)


def test_posterior_mean_single_and_duplicated(smoke, rng):
    prior = PriorConfig(3)
    chain = run_chain(smoke, prior, SamplerConfig(n_iter=200, n_burn=100, thin=20, seed=1))
    Xs = rng.random((7, 3))
    one = ChainRecord(chain.states[:1], chain.log_posts[:1], chain.acceptance, 1, {}, {})
    assert np.array_equal(posterior_mean(one, smoke, Xs), predict(smoke.y, smoke.X, chain.states[0], Xs)[0])
    dup = ChainRecord(chain.states * 2, np.tile(chain.log_posts, 2), chain.acceptance, 1, {}, {})
    assert np.allclose(posterior_mean(dup, smoke, Xs), posterior_mean(chain, smoke, Xs), rtol=0, atol=1e-14)


def test_frozen_chain_matches_dense_gp(smoke, rng):
    s = make_state([(1.2, 2.0, [0]), (0.4, 1.0, [1, 2])], 3, mu=0.4, sigma=0.2)
    frozen = SamplerConfig(n_iter=30, n_burn=0, thin=3, move_probs=(0.0,) * 7)
    chain = run_chain(smoke, PriorConfig(3), frozen, init=s)
    assert all(st == s for st in chain.states)
    Xs = rng.random((5, 3))
    assert np.max(np.abs(posterior_mean(chain, smoke, Xs) - dense_predict(smoke.y, smoke.X, s, Xs)[0])) < 1e-10


def test_inclusion_probability_examples():
    s = make_state([(1.0, 1.0, [2])], 5)
    t = make_state([(1.0, 1.0, [2, 4]), (1.0, 1.0, [0])], 5)
    chain = ChainRecord([s, t], np.zeros(2), {}, 0, {}, {})
    incl = inclusion_probabilities(chain)
    assert incl[2] == 1.0
    assert incl[1] == 0.0 and incl[3] == 0.0
    assert incl[4] == 0.5


def test_prior_only_inclusion_mass():
    prior = PriorConfig(20)
    chain = run_chain(Dataset.empty(20), prior, SamplerConfig(n_iter=60_000, n_burn=0, thin=4, seed=9))
    incl = inclusion_probabilities(chain)
    target = prior_inclusion_probability(prior)
    # effective sample size is well below the kept count; use a loose band
    assert np.all(np.abs(incl - target) < 0.05)
    assert abs(incl.mean() - target) < 0.01


def test_true_predictor_ranked_first():
    p = 10
    truth = AdditiveTruthSpec(p, (TruthComponent((4,), 1.0, 2.0),))
    wins = 0
    for seed in range(10):
        data = gen_dataset(DesignSpec(p), truth, 150, 0.0, 0.3, derive_seed(21, seed, 0))
        chain = run_chain(data, PriorConfig(p), SamplerConfig(n_iter=1500, n_burn=500, seed=derive_seed(21, seed, 1)))
        incl = inclusion_probabilities(chain)
        wins += incl[4] > np.delete(incl, 4).max()
    assert wins == 10


def test_chain_files_roundtrip(smoke, tmp_path):
    chain = run_chain(smoke, PriorConfig(3), SamplerConfig(n_iter=100, n_burn=10, thin=9, seed=1))
    j, c = chain.to_files(tmp_path, "run")
    back = ChainRecord.from_json(j)
    assert back.states == chain.states
    assert np.array_equal(back.log_posts, chain.log_posts)
    assert back.acceptance == chain.acceptance
    lines = c.read_bytes().split(b"\r\n")
    assert lines[0] == b"iteration,log_post,K,sigma,mu,incl1,incl2,incl3"


def test_rejects_rows_outside_unit_cube():
    with pytest.raises(ValueError):
        run_chain(Dataset(np.array([[1.5]]), np.array([0.0])), PriorConfig(1), SamplerConfig(n_iter=2, n_burn=0))
