import numpy as np
import pytest

from difflab.errors import InvalidArgumentError
from difflab.noise import (
    GmmSpec,
    LinkChannel,
    LinkNoiseSpec,
    ZERO_CHANNEL,
    gamma_lk,
    perturb_link,
    sample_gmm,
)


def test_gmm_spec_validation():
    with pytest.raises(InvalidArgumentError):
        GmmSpec(c=-0.1, sigma_a2=1)
    with pytest.raises(InvalidArgumentError):
        GmmSpec(c=0.5, sigma_a2=-1)
    assert GmmSpec(0.01, 0.04, 10.0).total_variance == pytest.approx(
        0.99 * 0.04 + 0.01 * 10.0)


def test_degenerate_mixtures():
    rng = np.random.default_rng(0)
    pure_a = sample_gmm(GmmSpec(0.0, 0.04, 10.0), rng, 200_000)
    assert np.var(pure_a) == pytest.approx(0.04, rel=0.03)
    pure_b = sample_gmm(GmmSpec(1.0, 0.04, 10.0), rng, 200_000)
    assert np.var(pure_b) == pytest.approx(10.0, rel=0.03)


def test_mixture_variance_and_mean():
    spec = GmmSpec(0.01, 0.04, 10.0)
    rng = np.random.default_rng(42)
    x = sample_gmm(spec, rng, 1_000_000)
    assert np.var(x) == pytest.approx(spec.total_variance, rel=0.03)
    assert abs(np.mean(x)) < 4 * np.sqrt(spec.total_variance) / 1e3


def test_mixture_heavy_tails():
    spec = GmmSpec(0.05, 0.04, 10.0)
    rng = np.random.default_rng(3)
    x = sample_gmm(spec, rng, 500_000)
    kurt = np.mean((x - x.mean()) ** 4) / np.var(x) ** 2
    assert kurt > 3.0


def test_perturb_self_link_identity():
    rng = np.random.default_rng(0)
    payload = np.array([1.0, -2.0, 3.0])
    out = perturb_link(payload, LinkChannel(GmmSpec(0, 0.04, 0), self_link=True), rng)
    assert out is payload or (out == payload).all()
    # no draws consumed: next sample matches a fresh stream
    assert rng.standard_normal() == np.random.default_rng(0).standard_normal()


def test_perturb_zero_variance_identity():
    rng = np.random.default_rng(0)
    payload = np.array([1.0, 2.0])
    out = perturb_link(payload, LinkChannel(ZERO_CHANNEL), rng)
    assert (out == payload).all()


def test_perturb_vector_variance():
    rng = np.random.default_rng(5)
    payload = np.zeros(4)
    ch = LinkChannel(GmmSpec(0.0, 0.04, 0.0))
    draws = np.array([perturb_link(payload, ch, rng) for _ in range(250_000)])
    assert np.allclose(draws.var(axis=0), 0.04, rtol=0.03)


def test_gamma_lk_values():
    assert gamma_lk(0.1, 0.04, 0.04) == pytest.approx(3.5)
    assert gamma_lk(0.0, 0.0, 1.0) == 0.0
    with pytest.raises(InvalidArgumentError):
        gamma_lk(0.1, 0.04, 0.0)
    with pytest.raises(InvalidArgumentError):
        gamma_lk(-0.1, 0.04, 1.0)


def test_link_noise_spec_channels():
    spec = LinkNoiseSpec(
        x=GmmSpec(0, 0.04, 0), y=GmmSpec(0, 0.02, 0),
        phi=GmmSpec(0.01, 0.04, 10.0), obs_var=np.array([0.1, 0.2]))
    assert spec.channel("x", 1, 1).self_link
    assert spec.channel("x", 1, 1).gmm.is_zero
    assert spec.channel("phi", 0, 1).gmm.c == 0.01
    assert spec.node_obs_var(1) == 0.2


def test_link_noise_spec_equality():
    a = LinkNoiseSpec(obs_var=np.array([0.1, 0.1]))
    b = LinkNoiseSpec(obs_var=np.array([0.1, 0.1]))
    c = LinkNoiseSpec(obs_var=np.array([0.1, 0.2]))
    assert a == b
    assert a != c
