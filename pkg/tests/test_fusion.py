import math

import numpy as np
import pytest

from citysent.fusion import (
    FusionParams,
    StageConfig,
    fusion_forward,
    fusion_grad_check,
    fusion_loss_batch,
    init_fusion_params,
    predict,
    stage1_config,
    stage2_config,
    train_stage1,
    train_stage2,
    weighted_objective,
    zero_mobility,
)
from citysent.io import mlp_bytes
from citysent.nn import softmax
from citysent.records import LABEL_TO_INDEX

from conftest import make_record

D_T, D_M = 5, 3


def small_params(seed=0):
    return init_fusion_params(D_T, D_M, np.random.default_rng(seed), h_t=4, h_m=4, h_f=4)


def records(n=30, seed=0):
    rng = np.random.default_rng(seed)
    return [make_record(i, rng, d_t=D_T, d_m=D_M) for i in range(n)]


def test_grad_check_all_groups():
    errors = fusion_grad_check(np.random.default_rng(0))
    assert set(errors) == {"theta_t_pooler", "theta_m", "theta_f", "theta_c"}
    assert all(e < 1e-4 for e in errors.values())


def test_objective_matches_per_record_recomputation():
    params = small_params()
    recs = records(12)
    loss, _ = fusion_loss_batch(params, recs, "gold_label")
    manual = 0.0
    for r in recs:
        _, _, _, probs, _ = fusion_forward(params, r)
        manual += -r.weight * math.log(probs[LABEL_TO_INDEX[r.gold_label]])
    assert abs(loss - manual / len(recs)) < 1e-12


def test_objective_custom_normalizer():
    params = small_params()
    recs = records(8)
    l_mean, _ = weighted_objective(params, recs, "gold_label")
    l_z, _ = weighted_objective(params, recs, "gold_label", normalizer=4.0)
    assert l_z == pytest.approx(l_mean * len(recs) / 4.0)


def test_objective_rejects_empty_and_bad_normalizer():
    params = small_params()
    with pytest.raises(ValueError):
        weighted_objective(params, [], "gold_label")
    with pytest.raises(ValueError):
        weighted_objective(params, records(2), "gold_label", normalizer=0.0)


def test_objective_rejects_missing_labels():
    params = small_params()
    recs = records(3)
    recs[1].gold_label = None
    with pytest.raises(ValueError):
        weighted_objective(params, recs, "gold_label")


def test_frozen_groups_excluded_from_gradients():
    params = small_params()
    params.set_frozen({"theta_t_pooler", "theta_m"})
    _, grads = weighted_objective(params, records(5), "gold_label")
    assert set(grads) == {"theta_f", "theta_c"}


def test_set_frozen_rejects_unknown_group():
    with pytest.raises(ValueError):
        small_params().set_frozen({"theta_x"})


def test_stage2_leaves_encoders_byte_identical():
    params = small_params()
    recs = records(40)
    p1, _ = train_stage1(params, recs, stage1_config(epochs=3))
    before = {"theta_t_pooler": mlp_bytes(p1.pooler), "theta_m": mlp_bytes(p1.mobility)}
    p2, _ = train_stage2(p1, recs, stage2_config(epochs=3))
    assert mlp_bytes(p2.pooler) == before["theta_t_pooler"]
    assert mlp_bytes(p2.mobility) == before["theta_m"]
    # and the trainable groups actually moved
    assert mlp_bytes(p2.fusion) != mlp_bytes(p1.fusion)
    assert mlp_bytes(p2.classifier) != mlp_bytes(p1.classifier)


def test_stage1_trains_all_four_groups():
    params = small_params()
    recs = records(40)
    p1, _ = train_stage1(params, recs, stage1_config(epochs=3))
    for name, mlp in params.groups().items():
        assert mlp_bytes(p1.groups()[name]) != mlp_bytes(mlp), name


def test_training_does_not_mutate_input_params():
    params = small_params()
    snapshot = {n: mlp_bytes(m) for n, m in params.groups().items()}
    train_stage1(params, records(20), stage1_config(epochs=2))
    assert {n: mlp_bytes(m) for n, m in params.groups().items()} == snapshot


def test_training_deterministic():
    a, _ = train_stage1(small_params(), records(30), stage1_config(epochs=4, seed=9))
    b, _ = train_stage1(small_params(), records(30), stage1_config(epochs=4, seed=9))
    for name in a.groups():
        assert mlp_bytes(a.groups()[name]) == mlp_bytes(b.groups()[name])


def test_training_reduces_loss():
    recs = records(80, seed=2)
    params, curve = train_stage1(small_params(), recs, stage1_config(epochs=40))
    assert curve[-1] < curve[0]


def test_stage_config_rejects_bad_label_source():
    with pytest.raises(ValueError):
        StageConfig("weak_pretrain", "other_label")


def test_predict_tie_prefers_neutral():
    params = small_params()
    # zero classifier -> uniform probabilities -> three-way tie -> neutral
    for layer in params.classifier.layers:
        layer.weight[:] = 0.0
        layer.bias[:] = 0.0
    (label, probs) = predict(params, records(1))[0]
    np.testing.assert_allclose(probs, np.ones(3) / 3)
    assert label == 0


def test_predict_probabilities_valid():
    params = small_params()
    for label, probs in predict(params, records(10)):
        assert label in (-1, 0, 1)
        assert abs(probs.sum() - 1.0) < 1e-12
        assert np.all(probs >= 0)


def test_zero_mobility_never_reads_values():
    rng = np.random.default_rng(0)
    poisoned = [
        make_record(i, rng, d_t=D_T, d_m=D_M, mobility_features=np.full(D_M, np.nan))
        for i in range(5)
    ]
    cleaned = zero_mobility(poisoned)
    assert all(np.array_equal(r.mobility_features, np.zeros(D_M)) for r in cleaned)
    for label, probs in predict(small_params(), cleaned):
        assert np.all(np.isfinite(probs))
    # originals untouched
    assert all(np.isnan(r.mobility_features).all() for r in poisoned)
