import math

import numpy as np
import pytest

from hiacg import checkpoint
from hiacg.acg import AcgConfig, AcgModel, Condition, Example, TrainConfig, cosine_distance, count_bucket
from hiacg.baseline import BaselineConfig, FlatArModel, flatten, matched_config, unflatten
from hiacg.errors import ConfigError, ShapeError, StateError
from hiacg.harness.corpus import make_toy_corpus
from hiacg.harness.training import smoothed, train
from hiacg.sampling import GREEDY, SamplerConfig, sample
from hiacg.tokens import PatchConfig, TokenMatrix, encode

TINY = AcgConfig(hidden_dim=32, heads=2, sem_layers=1, rec_layers=1, max_blocks=64)


def _piece(seed=0, blocks=8):
    rng = np.random.default_rng(seed)
    return TokenMatrix(rng.integers(0, 256, (blocks, 44)) * (rng.random((blocks, 44)) < 0.2))


@pytest.fixture(scope="module")
def trained_tiny():
    model = AcgModel(TINY)
    model.train_step([_piece()])
    return model


# -- config ------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        AcgConfig(hidden_dim=30, heads=4)
    with pytest.raises(ConfigError):
        AcgConfig(sem_layers=0)
    assert AcgConfig().block_len == 44 and AcgConfig().vocab == 256
    assert AcgConfig(d=1).block_len == 88 and AcgConfig(d=3).block_len == 30
    full = AcgConfig.paper_scale()
    assert (full.hidden_dim, full.sem_layers, full.rec_layers, full.reemb_layers) == (1024, 12, 6, 3)
    assert AcgConfig.from_dict(TINY.to_dict()) == TINY


def test_count_bucket():
    assert [count_bucket(n, 16) for n in (1, 2, 3, 4, 240)] == [1, 2, 2, 3, 8]
    assert count_bucket(10**9, 16) == 15


# -- semantic prediction -------------------------------------------------------------

def test_untrained_targets_are_refused():
    with pytest.raises(StateError):
        AcgModel(TINY).semantic_targets(_piece())


def test_predict_semantic_shape_and_determinism(trained_tiny):
    cond = Condition(4)
    z1 = trained_tiny.predict_semantic(np.zeros((0, 32)), cond, 1)
    assert z1.shape == (32,) and np.isfinite(z1).all()
    np.testing.assert_array_equal(z1, trained_tiny.predict_semantic(np.zeros((0, 32)), cond, 1))


def test_predict_semantic_step_contract(trained_tiny):
    with pytest.raises(StateError):
        trained_tiny.predict_semantic(np.zeros((2, 32)), Condition(4), 2)
    with pytest.raises(ConfigError):
        trained_tiny.predict_semantic(np.zeros((64, 32)), Condition(4), 65)


def test_anchor_causality(trained_tiny):
    piece = _piece(1)
    anchors = trained_tiny.reembed_blocks(piece.tokens[:3])
    cond = Condition(8)
    z3 = trained_tiny.predict_semantic(anchors[:2], cond, 3)
    z3_again = trained_tiny.predict_semantic(anchors[:2], cond, 3)
    z4 = trained_tiny.predict_semantic(anchors, cond, 4)
    np.testing.assert_array_equal(z3, z3_again)
    assert not np.allclose(z3, z4)


def test_teacher_forced_features_match_stepwise(trained_tiny):
    piece = _piece(2)
    feats = trained_tiny.semantic_targets(piece)
    anchors = trained_tiny.reembed_blocks(piece.tokens)
    for step in (1, 4, 8):
        z = trained_tiny.predict_semantic(anchors[:step - 1], Condition(8), step)
        np.testing.assert_allclose(feats[step - 1], z, atol=1e-5)
    assert cosine_distance(feats[3], feats[3]) == 0.0


# -- reconstruction and re-embedding --------------------------------------------

def test_reconstruct_block(trained_tiny):
    z = trained_tiny.predict_semantic(np.zeros((0, 32)), Condition(1), 1)
    block = trained_tiny.reconstruct_block(z, SamplerConfig(), np.random.default_rng(0))
    assert block.shape == (44,) and block.min() >= 0 and block.max() < 256
    g1 = trained_tiny.reconstruct_block(z, GREEDY, np.random.default_rng(1))
    g2 = trained_tiny.reconstruct_block(z, GREEDY, np.random.default_rng(2))
    np.testing.assert_array_equal(g1, g2)


def test_reembed(trained_tiny):
    block = _piece(3).tokens[0]
    a = trained_tiny.reembed(block)
    assert a.shape == (32,)
    np.testing.assert_array_equal(a, trained_tiny.reembed(block))
    with pytest.raises(ShapeError):
        trained_tiny.reembed(block[:43])


def test_reembed_separates_near_pairs(trained_tiny):
    rng = np.random.default_rng(4)
    for _ in range(100):
        block = rng.integers(0, 256, 44)
        other = block.copy()
        i = rng.integers(44)
        other[i] = (other[i] + rng.integers(1, 256)) % 256
        assert not np.array_equal(trained_tiny.reembed(block), trained_tiny.reembed(other))


# -- generation -----------------------------------------------------------------

def test_generate_block_count(trained_tiny):
    out = trained_tiny.generate(Condition(4), rng=0)
    assert out.shape == (4, 44)


def test_generate_prompt_passthrough(trained_tiny):
    prompt = _piece(5)
    out = trained_tiny.generate(Condition(8, prompt=prompt), rng=0)
    assert out.shape == (16, 44)
    np.testing.assert_array_equal(out.tokens[:8], prompt.tokens)


def test_generate_two_minutes_of_blocks():
    # 120 s at 120 bpm = 240 quarters... per 16th-step grid: 2 steps/beat*4 = 8 steps/s -> 960 steps
    n_steps = 120 * (120 // 60) * 4
    assert n_steps == 960 and n_steps // 4 == 240
    model = AcgModel(AcgConfig(hidden_dim=16, heads=2, sem_layers=1, rec_layers=1, max_blocks=240))
    model.train_step([_piece()])
    assert model.generate(Condition(240), rng=0).shape == (240, 44)
    with pytest.raises(ConfigError):
        model.generate(Condition(241), rng=0)


def test_free_run_first_feature_equals_teacher_forced(trained_tiny):
    piece = _piece(6)
    cond = Condition(4, prompt=piece[:4])
    _, feats = trained_tiny.generate(cond, rng=0, return_features=True)
    target = trained_tiny.semantic_targets(piece, cond)
    np.testing.assert_array_equal(feats[0], target[4])


def test_generation_is_seeded(trained_tiny):
    a = trained_tiny.generate(Condition(3), rng=11)
    b = trained_tiny.generate(Condition(3), rng=11)
    assert a == b


# -- training -------------------------------------------------------------------

def test_initial_loss_near_uniform():
    model = AcgModel(AcgConfig(hidden_dim=32, heads=2))
    loss = model.evaluate_loss([_piece(7)])
    assert abs(loss - math.log(256)) < 0.5


def test_training_is_deterministic():
    def run():
        model = AcgModel(TINY, TrainConfig(seed=3, crop_blocks=4))
        return [model.train_step([_piece(8)]) for _ in range(5)]
    assert run() == run()


def test_overfit_single_piece():
    piece = encode(make_toy_corpus(1, 5, 2, 2)[0])
    model = AcgModel(AcgConfig(hidden_dim=64, heads=4, max_blocks=16), TrainConfig(decay_steps=300))
    losses = [model.train_step([piece]) for _ in range(300)]
    assert losses[199] < 0.1
    out = model.generate(Condition(piece.n_blocks), GREEDY, 0)
    assert out == piece


def test_loss_trend_on_toy_corpus():
    data = [encode(r) for r in make_toy_corpus(10, 0, 4, 4)]
    model = AcgModel(TINY, TrainConfig(lr=2e-3, crop_blocks=8))
    curve = smoothed(train(model, data, 500, seed=0), 20)
    # monotone in trend: no 100-step window averages noticeably above the one before it
    means = [w.mean() for w in np.array_split(curve, 5)]
    assert all(b <= a + 0.02 for a, b in zip(means, means[1:]))
    assert means[-1] < 0.25 * means[0] and curve[-1] < 0.1 * curve[0]


def test_single_block_piece_trains():
    # no anchors are used, so the re-embedding weights get no gradient and stay put
    model = AcgModel(TINY)
    before = model.params["reemb.0.w"].data.copy()
    model.train_step([_piece(blocks=1)])
    np.testing.assert_array_equal(model.params["reemb.0.w"].data, before)


def test_lr_schedule():
    cfg = TrainConfig(lr=1.0, warmup=10, decay_steps=100)
    assert cfg.lr_at(0) == pytest.approx(0.1) and cfg.lr_at(10) == pytest.approx(1.0)
    assert cfg.lr_at(110) == pytest.approx(0.1) and cfg.lr_at(10_000) == pytest.approx(0.1)


def test_prompt_blocks_are_not_targets():
    model = AcgModel(TINY)
    piece = _piece(9)
    full = model.evaluate_loss([Example(piece.tokens)])
    tail = model.evaluate_loss([Example(piece.tokens, prompt_len=4)])
    assert full != tail
    with pytest.raises(ValueError):
        model.batch_loss([Example(piece.tokens, prompt_len=8)])


def test_patch_mismatch():
    model = AcgModel(TINY)
    with pytest.raises(ConfigError):
        model.train_step([TokenMatrix(np.zeros((4, 88), np.int64), PatchConfig(1, 4))])


def test_checkpoint_round_trip(tmp_path, trained_tiny):
    path = tmp_path / "m.ckpt"
    trained_tiny.save(path)
    loaded = AcgModel.load(path)
    assert loaded.config == TINY and loaded.trained
    for name, p in trained_tiny.params.items():
        np.testing.assert_array_equal(p.data, loaded.params[name].data)
    assert loaded.generate(Condition(2), GREEDY, 0) == trained_tiny.generate(Condition(2), GREEDY, 0)
    arrays, config, manifest = checkpoint.loads(trained_tiny.to_bytes())
    assert config == TINY.to_dict() and manifest["kind"] == "acg"
    with pytest.raises(ValueError):
        checkpoint.loads(b"garbage!" + trained_tiny.to_bytes()[8:])


# -- baseline ---------------------------------------------------------------------

def test_flatten_round_trip():
    piece = _piece(10)
    stream = flatten(piece)
    assert stream.shape == (8 * 44,)
    assert unflatten(stream) == piece
    with pytest.raises(ShapeError):
        unflatten(stream[:-1])


def test_matched_baseline_size():
    for cfg in (TINY, AcgConfig(hidden_dim=64, heads=2, sem_layers=2, rec_layers=2, max_blocks=64)):
        base = FlatArModel(matched_config(cfg))
        acg = AcgModel(cfg)
        assert abs(base.n_parameters() / acg.n_parameters() - 1) <= 0.10


def test_baseline_contract():
    model = FlatArModel(BaselineConfig(hidden_dim=32, layers=1, heads=2, max_blocks=64))
    assert abs(model.evaluate_loss([_piece(11)]) - math.log(256)) < 0.5
    model.train_step([_piece(11)])
    prompt = _piece(12)
    out, feats = model.generate(Condition(3, prompt=prompt[:2]), rng=0, return_features=True)
    assert out.shape == (5, 44) and feats.shape == (3, 32)
    np.testing.assert_array_equal(out.tokens[:2], prompt.tokens[:2])
    target = model.semantic_targets(prompt[:5], Condition(3, prompt=prompt[:2]))
    np.testing.assert_array_equal(feats[0], target[2])
    loaded = FlatArModel.from_bytes(model.to_bytes())
    assert loaded.generate(Condition(2), GREEDY, 0) == model.generate(Condition(2), GREEDY, 0)


# -- sampling -----------------------------------------------------------------------

def test_sampler():
    rng = np.random.default_rng(0)
    logits = np.array([[0.0, 5.0, 1.0, -3.0]])
    assert sample(logits, GREEDY, rng)[0] == 1
    draws = [sample(logits, SamplerConfig(top_k=2), rng)[0] for _ in range(200)]
    assert set(draws) <= {1, 2}
    with pytest.raises(ValueError):
        SamplerConfig(temperature=0)
    with pytest.raises(ValueError):
        SamplerConfig(top_k=0)
