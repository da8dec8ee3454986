import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import scalar_model
from tdcd import models, oracles
from tdcd.errors import ConfigError, NumericError
from tdcd.models import LossSpec, SiloModelSpec


@pytest.mark.parametrize("arch", models.ARCHITECTURES)
@pytest.mark.parametrize("kind", models.LOSS_KINDS)
def test_partial_gradient_matches_finite_differences(arch, kind):
    assert oracles.gradient_check(arch, kind, n_probes=100, seed=3) < 1e-5


def test_linear_embed_matches_scalar_loops():
    gen = np.random.default_rng(0)
    spec = SiloModelSpec(0, 4, 3)
    theta = gen.normal(size=spec.n_params)
    rows = gen.normal(size=(5, 4))
    got = models.embed(spec, theta, rows)
    for p in range(5):
        np.testing.assert_allclose(got[p], scalar_model.linear_forward(theta, rows[p], 4, 3), rtol=1e-13)


def test_mlp_embed_matches_scalar_loops():
    gen = np.random.default_rng(1)
    spec = SiloModelSpec(2, 3, 2, "mlp", 4)
    theta = gen.normal(size=spec.n_params)
    rows = gen.normal(size=(6, 3))
    got = models.embed(spec, theta, rows)
    for p in range(6):
        np.testing.assert_allclose(got[p], scalar_model.mlp_forward(theta, rows[p], 3, 4, 2), rtol=1e-12)


def test_losses_match_scalar_reference():
    gen = np.random.default_rng(2)
    z = gen.normal(size=(7, 3)) * 3
    y = gen.normal(size=(7, 3))
    sq = models.per_sample_loss(z, y, LossSpec("squared_error", 3))
    np.testing.assert_allclose(sq, [scalar_model.squared_error(z[p], y[p]) for p in range(7)], rtol=1e-13)

    cls = gen.integers(0, 3, size=7).astype(float)
    ce = models.per_sample_loss(z, cls, LossSpec("softmax_cross_entropy", 3))
    np.testing.assert_allclose(ce, [scalar_model.softmax_ce(z[p], cls[p]) for p in range(7)], rtol=1e-12)

    logit = z[:, :1] * 10
    yb = gen.integers(0, 2, size=7).astype(float)
    bce = models.per_sample_loss(logit, yb, LossSpec("binary_cross_entropy_with_logit"))
    np.testing.assert_allclose(bce, [scalar_model.bce_with_logit(logit[p], yb[p]) for p in range(7)], rtol=1e-12)


def test_trivial_examples():
    spec = SiloModelSpec(0, 1, 1)
    assert models.embed(spec, np.array([2.0]), np.array([[3.0]]))[0, 0] == 6.0
    # zero gradient at the exact fit
    g = models.partial_gradient(spec, np.array([2.0]), np.array([[3.0]]), np.zeros(1), np.array([6.0]),
                                LossSpec("squared_error"))
    assert g.tolist() == [0.0]
    # d/dtheta (3 theta - 5)^2 at theta = 2 is 2 * 1 * 3 = 6
    g = models.partial_gradient(spec, np.array([2.0]), np.array([[3.0]]), np.zeros(1), np.array([5.0]),
                                LossSpec("squared_error"))
    assert g.tolist() == [6.0]


def test_bce_is_log2_at_zero_logit():
    v = models.composite_loss(np.zeros((4, 1)), np.array([0.0, 1.0, 1.0, 0.0]), LossSpec("binary_cross_entropy_with_logit"))
    assert v == pytest.approx(np.log(2.0), rel=1e-15)


def test_bce_stable_for_huge_logits():
    z = np.array([[800.0], [-800.0]])
    vals = models.per_sample_loss(z, np.array([1.0, 0.0]), LossSpec("binary_cross_entropy_with_logit"))
    assert np.all(np.isfinite(vals)) and np.all(vals < 1e-300)
    g = models.loss_grad_wrt_sum(z, np.array([0.0, 1.0]), LossSpec("binary_cross_entropy_with_logit"))
    np.testing.assert_allclose(g[:, 0], [1.0, -1.0])


def test_softmax_uniform_logits():
    v = models.composite_loss(np.zeros((3, 4)), np.array([0, 1, 3]), LossSpec("softmax_cross_entropy", 4))
    assert v == pytest.approx(np.log(4.0), rel=1e-15)


def test_empty_rows_give_zero_gradient():
    spec = SiloModelSpec(0, 3, 1, "mlp", 2)
    block = models.init_block(spec, 0)
    g = models.partial_gradient(spec, block, np.empty((0, 3)), np.empty((0, 1)), np.empty(0), LossSpec("squared_error"))
    assert g.shape == block.shape and not g.any()


def test_non_finite_embedding_names_sample():
    z = np.array([[0.0], [np.nan], [1.0]])
    with pytest.raises(NumericError) as err:
        models.composite_loss(z, np.zeros(3), LossSpec("squared_error"))
    assert err.value.sample_index == 1


def test_loss_spec_validation():
    with pytest.raises(ConfigError):
        LossSpec("hinge")
    with pytest.raises(ConfigError):
        LossSpec("softmax_cross_entropy", 1)
    with pytest.raises(ConfigError):
        LossSpec("binary_cross_entropy_with_logit", 2)
    with pytest.raises(ConfigError):
        LossSpec("softmax_cross_entropy", 3).check_embedding_dim(2)
    with pytest.raises(ConfigError):
        models.per_sample_loss(np.zeros((2, 3)), np.array([0, 3]), LossSpec("softmax_cross_entropy", 3))


def test_block_shape_errors():
    spec = SiloModelSpec(1, 3, 2)
    with pytest.raises(ConfigError):
        models.embed(spec, np.zeros(spec.n_params), np.zeros((4, 2)))
    with pytest.raises(ConfigError):
        models.check_block(spec, np.zeros(5))
    with pytest.raises(ConfigError):
        SiloModelSpec(0, 3, 1, "cnn")


def test_init_is_keyed_by_seed_and_silo():
    a = models.init_block(SiloModelSpec(0, 4, 1), 7)
    assert np.array_equal(a, models.init_block(SiloModelSpec(0, 4, 1), 7))
    assert not np.array_equal(a, models.init_block(SiloModelSpec(1, 4, 1), 7))
    assert not np.array_equal(a, models.init_block(SiloModelSpec(0, 4, 1), 8))
    assert np.all(np.abs(a) <= 0.5)


def test_objective_gradient_agrees_with_partial_gradients():
    gen = np.random.default_rng(4)
    specs = [SiloModelSpec(0, 2, 1), SiloModelSpec(1, 3, 1, "mlp", 3)]
    blocks = [gen.normal(size=s.n_params) for s in specs]
    rows = [gen.normal(size=(10, 2)), gen.normal(size=(10, 3))]
    y = gen.normal(size=10)
    loss = LossSpec("squared_error")
    grads = models.objective_gradient(specs, blocks, rows, y, loss)
    for j in range(2):
        other = models.embed(specs[1 - j], blocks[1 - j], rows[1 - j])
        np.testing.assert_allclose(
            grads[j], models.partial_gradient(specs[j], blocks[j], rows[j], other, y, loss), rtol=1e-13
        )


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_loss_invariant_to_sample_permutation(n, seed):
    gen = np.random.default_rng(seed)
    z = gen.normal(size=(n, 3))
    y = gen.integers(0, 3, size=n)
    loss = LossSpec("softmax_cross_entropy", 3)
    perm = gen.permutation(n)
    assert models.composite_loss(z, y, loss) == pytest.approx(models.composite_loss(z[perm], y[perm], loss), rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_embedding_sum_invariant_to_silo_relabeling(seed):
    gen = np.random.default_rng(seed)
    specs = [SiloModelSpec(j, d, 2) for j, d in enumerate((2, 1, 3))]
    blocks = [gen.normal(size=s.n_params) for s in specs]
    rows = [gen.normal(size=(5, s.input_dim)) for s in specs]
    fwd = models.embedding_sum(specs, blocks, rows)
    rev = models.embedding_sum(specs[::-1], blocks[::-1], rows[::-1])
    np.testing.assert_allclose(fwd, rev, rtol=1e-13, atol=1e-14)
