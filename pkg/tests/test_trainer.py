"""Optimizer, training loop, checkpoint, and inference tests.

The Adam oracle is an independent scalar re-implementation with plain
floats; loop tests run a miniature dataset written to disk so the whole
path (decode, batch, forward, loss, step, log, checkpoint) is covered.
"""

import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import egmt.numerics as nm
from egmt.data_pipeline import DataError, DatasetManifest, save_image
from egmt.entity_ingest import load_vocabulary
from egmt.model import ModelConfig, ModelParams, forward_full, init_params
from egmt.trainer import (
    LOG_COLUMNS,
    NumericError,
    TrainConfig,
    adam_step,
    clip_gradients,
    fuse_inference,
    fuse_sample,
    init_state,
    load_checkpoint,
    save_checkpoint,
    train,
)

CATEGORIES = [
    "person",
    "car",
    "bus",
    "truck",
    "motorcycle",
    "bicycle",
    "lamp",
    "building",
    "tree",
]


def small_cfg(**kw):
    base = dict(shallow_channels=8, patch=8, heads=2, mask_ratio=0.5)
    base.update(kw)
    return ModelConfig(**base)


def scalar_state(value=1.0, name="w"):
    t = nm.Tensor(np.array([value]), requires_grad=True, name=name)
    params = ModelParams({name: t}, small_cfg())
    return init_state(params, seed=0)


def make_dataset(root: Path, n=4, size=32, seed=3, with_annotations=True):
    root.mkdir(parents=True, exist_ok=True)
    r = np.random.default_rng(seed)
    entries = []
    for i in range(n):
        save_image(root / f"s{i}_ir.png", r.random((size, size)))
        save_image(root / f"s{i}_vi.png", r.random((3, size, size)))
        entry = {"ir_path": f"s{i}_ir.png", "vi_path": f"s{i}_vi.png"}
        if with_annotations:
            ann = {
                "image_id": f"s{i}",
                "entities": [
                    {
                        "text": ["car", "person", "tree"][i % 3],
                        "source": "vi",
                        "embedding": (r.normal(size=768) * 0.1).tolist(),
                    },
                    {
                        "text": "lamp",
                        "source": "ir",
                        "embedding": (r.normal(size=768) * 0.1).tolist(),
                    },
                ],
            }
            (root / f"s{i}.json").write_text(json.dumps(ann))
            entry["annotation_path"] = f"s{i}.json"
        entries.append(entry)
    (root / "manifest.json").write_text(
        json.dumps({"split": "train", "entries": entries})
    )
    return DatasetManifest.load(root / "manifest.json")


@pytest.fixture()
def vocab():
    return load_vocabulary({"categories": CATEGORIES, "synonyms": {}})


# ---------------------------------------------------------------------------
# adam_step


def test_adam_zero_grads_leave_params_unchanged():
    state = scalar_state(1.5)
    adam_step(state, {"w": np.zeros(1)}, TrainConfig())
    assert state.params["w"].data[0] == 1.5
    assert state.step == 1


def test_adam_first_step_magnitude_is_lr():
    cfg = TrainConfig(lr=1e-4)
    state = scalar_state(0.0)
    adam_step(state, {"w": np.ones(1)}, cfg)
    # bias-corrected first step: lr * 1 / (1 + eps)
    expected = cfg.lr / (1.0 + cfg.eps)
    assert abs(-state.params["w"].data[0] - expected) < 1e-18


def test_adam_ten_steps_match_scalar_reference():
    cfg = TrainConfig(lr=1e-2)
    state = scalar_state(1.0)
    for _ in range(10):
        g = 2.0 * state.params["w"].data.copy()
        adam_step(state, {"w": g}, cfg)

    w, m, v = 1.0, 0.0, 0.0
    for t in range(1, 11):
        g = 2.0 * w
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mh = m / (1 - cfg.beta1**t)
        vh = v / (1 - cfg.beta2**t)
        w -= cfg.lr * mh / (math.sqrt(vh) + cfg.eps)
    assert abs(state.params["w"].data[0] - w) < 1e-10


def test_adam_rejects_non_finite_gradient():
    state = scalar_state(1.0)
    with pytest.raises(NumericError, match="'w'"):
        adam_step(state, {"w": np.array([np.nan])}, TrainConfig())
    with pytest.raises(NumericError, match="'w'"):
        adam_step(state, {"w": np.array([np.inf])}, TrainConfig())


def test_adam_moves_every_parameter():
    cfg = small_cfg()
    params = init_params(cfg, nm.Rng(0))
    state = init_state(params, 0)
    before = {n: t.data.copy() for n, t in params.tensors.items()}
    grads = {n: np.full_like(t.data, 0.5) for n, t in params.tensors.items()}
    adam_step(state, grads, TrainConfig())
    for name, t in params.tensors.items():
        assert not np.array_equal(t.data, before[name]), name
    assert "task.w" in params.tensors


def test_clip_gradients_scales_to_max_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    norm = clip_gradients(grads, 1.0)
    assert abs(norm - 5.0) < 1e-12
    assert np.allclose([grads["a"][0], grads["b"][0]], [0.6, 0.8])
    grads = {"a": np.array([0.3])}
    clip_gradients(grads, 1.0)
    assert grads["a"][0] == 0.3  # below the cap: untouched


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_save_load_save_is_byte_identical(tmp_path):
    cfg = small_cfg()
    params = init_params(cfg, nm.Rng(4))
    state = init_state(params, 4)
    state.step = 7
    state.m = {n: np.full_like(t.data, 0.25) for n, t in params.tensors.items()}
    first = tmp_path / "a.egtc"
    second = tmp_path / "b.egtc"
    save_checkpoint(first, state, cfg, TrainConfig(seed=4))
    loaded, cfg2, tc2 = load_checkpoint(first)
    save_checkpoint(second, loaded, cfg2, tc2)
    assert first.read_bytes() == second.read_bytes()
    assert loaded.step == 7 and loaded.seed == 4
    assert cfg2 == cfg
    assert set(loaded.m) == set(params.tensors)


def test_checkpoint_restores_values_and_dtype(tmp_path):
    cfg = small_cfg()
    state = init_state(init_params(cfg, nm.Rng(1)), 1)
    path = tmp_path / "c.egtc"
    save_checkpoint(path, state, cfg)
    loaded, cfg2, _ = load_checkpoint(path)
    for name, t in state.params.tensors.items():
        assert loaded.params[name].data.dtype == np.float64
        np.testing.assert_allclose(
            loaded.params[name].data, t.data.astype(np.float32), atol=0
        )
        assert loaded.params[name].requires_grad


def test_checkpoint_rejects_foreign_container(tmp_path):
    from egmt.numerics.serialize import write_container

    path = tmp_path / "x.egtc"
    write_container(path, {"a": np.zeros(3)}, {"kind": "other"})
    with pytest.raises(DataError):
        load_checkpoint(path)


# ---------------------------------------------------------------------------
# training loop


def test_train_two_runs_same_seed_bitwise_identical(tmp_path, vocab):
    man = make_dataset(tmp_path / "data")
    cfg = small_cfg()
    tc = TrainConfig(epochs=2, batch=2, seed=11)
    ck_a, log_a = train(man, cfg, tc, tmp_path / "a", vocab=vocab)
    ck_b, log_b = train(man, cfg, tc, tmp_path / "b", vocab=vocab)
    assert ck_a.read_bytes() == ck_b.read_bytes()
    assert log_a.read_bytes() == log_b.read_bytes()


def test_train_seed_changes_trajectory(tmp_path, vocab):
    man = make_dataset(tmp_path / "data")
    cfg = small_cfg()
    ck_a, _ = train(man, cfg, TrainConfig(epochs=1, batch=2, seed=1), tmp_path / "a", vocab=vocab)
    ck_b, _ = train(man, cfg, TrainConfig(epochs=1, batch=2, seed=2), tmp_path / "b", vocab=vocab)
    assert ck_a.read_bytes() != ck_b.read_bytes()


def test_loss_log_format_and_balance_invariant(tmp_path, vocab):
    man = make_dataset(tmp_path / "data")
    _, log = train(
        man, small_cfg(), TrainConfig(epochs=2, batch=2, seed=5), tmp_path / "out", vocab=vocab
    )
    lines = log.read_text().strip().splitlines()
    assert lines[0] == ",".join(LOG_COLUMNS)
    assert len(lines) == 1 + 4  # 2 epochs x 2 steps
    for i, line in enumerate(lines[1:], start=1):
        row = dict(zip(LOG_COLUMNS, line.split(",")))
        assert int(row["step"]) == i
        lam1, lam2 = float(row["lambda1"]), float(row["lambda2"])
        assert abs(lam1 + lam2 - 1.0) < 1e-9
        total = float(row["L_total"])
        recombined = lam1 * float(row["L_fus"]) + lam2 * float(row["L_cla"])
        assert abs(total - recombined) < 1e-8


def test_loss_log_appends_across_runs(tmp_path, vocab):
    man = make_dataset(tmp_path / "data")
    out = tmp_path / "out"
    tc = TrainConfig(epochs=1, batch=2, seed=5)
    train(man, small_cfg(), tc, out, vocab=vocab)
    train(man, small_cfg(), tc, out, vocab=vocab)
    lines = (out / "loss_log.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 2 + 2  # one header, rows accumulate
    assert lines[1] == lines[3]  # identical reruns produce identical rows


def test_train_multitask_off_pins_balance_and_freezes_task_scalars(tmp_path, vocab):
    man = make_dataset(tmp_path / "data")
    ck, log = train(
        man,
        small_cfg(),
        TrainConfig(epochs=1, batch=2, seed=3, use_mt=False),
        tmp_path / "out",
        vocab=vocab,
    )
    for line in log.read_text().strip().splitlines()[1:]:
        row = dict(zip(LOG_COLUMNS, line.split(",")))
        assert float(row["lambda1"]) == 1.0
        assert float(row["lambda2"]) == 0.0
        assert float(row["L_cla"]) == 0.0
    state, _, _ = load_checkpoint(ck)
    np.testing.assert_array_equal(state.params["task.w"].data, np.zeros(2))


def test_train_without_text_ignores_annotations(tmp_path):
    man = make_dataset(tmp_path / "data", with_annotations=False)
    ck, log = train(
        man,
        small_cfg(),
        TrainConfig(epochs=1, batch=2, seed=3, use_text=False),
        tmp_path / "out",
    )
    assert ck.exists()
    _, cfg2, tc2 = load_checkpoint(ck)
    assert cfg2.use_text is False  # ablation projected onto the stored config
    assert tc2.use_text is False
    for line in log.read_text().strip().splitlines()[1:]:
        row = dict(zip(LOG_COLUMNS, line.split(",")))
        assert float(row["lambda1"]) == 1.0


def test_train_ablated_stage_parameters_stay_at_init(tmp_path, vocab):
    man = make_dataset(tmp_path / "data")
    cfg = small_cfg()
    tc = TrainConfig(epochs=1, batch=2, seed=9, use_cgha=False)
    ck, _ = train(man, cfg, tc, tmp_path / "out", vocab=vocab)
    state, cfg2, _ = load_checkpoint(ck)
    reference = init_params(tc.apply_ablations(cfg), nm.Rng(9))
    for name in state.params.names():
        if name.startswith("cgha."):
            np.testing.assert_array_equal(
                state.params[name].data,
                reference[name].data.astype(np.float32).astype(np.float64),
            )


def test_train_empty_manifest_rejected(tmp_path):
    (tmp_path / "manifest.json").write_text(json.dumps({"split": "train", "entries": []}))
    man = DatasetManifest.load(tmp_path / "manifest.json")
    with pytest.raises(DataError):
        train(man, small_cfg(), TrainConfig(epochs=1), tmp_path / "out")


def test_train_loss_decreases_on_tiny_overfit(tmp_path, vocab):
    man = make_dataset(tmp_path / "data", n=2, size=32)
    tc = TrainConfig(epochs=15, batch=2, seed=1, lr=1e-3)
    _, log = train(man, small_cfg(mask_ratio=0.0), tc, tmp_path / "out", vocab=vocab)
    rows = [
        dict(zip(LOG_COLUMNS, line.split(",")))
        for line in log.read_text().strip().splitlines()[1:]
    ]
    fus = [float(r["L_fus"]) for r in rows]
    assert len(fus) == 15
    assert np.mean(fus[-5:]) < np.mean(fus[:5])


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch=0)
    with pytest.raises(ValueError):
        TrainConfig(clip_norm=-1.0)
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"learning_rate": 1e-3})
    cfg = TrainConfig(seed=7)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_checkpoint_every_writes_intermediates(tmp_path, vocab):
    man = make_dataset(tmp_path / "data")
    train(
        man,
        small_cfg(),
        TrainConfig(epochs=2, batch=2, seed=2, checkpoint_every=3),
        tmp_path / "out",
        vocab=vocab,
    )
    names = sorted(p.name for p in (tmp_path / "out").glob("*.egtc"))
    assert names == ["checkpoint_000003.egtc", "checkpoint_final.egtc"]


# ---------------------------------------------------------------------------
# inference


def test_fuse_outputs_exist_and_match_extents(tmp_path, vocab):
    man = make_dataset(tmp_path / "data", n=2)
    ck, _ = train(man, small_cfg(), TrainConfig(epochs=1, batch=2, seed=6), tmp_path / "out", vocab=vocab)
    outs = fuse_inference(ck, man, tmp_path / "fused", vocab=vocab)
    assert [p.name for p in outs] == ["s0_ir_fused.png", "s1_ir_fused.png"]
    from PIL import Image

    for p in outs:
        assert Image.open(p).size == (32, 32)


def test_fuse_twice_byte_identical(tmp_path, vocab):
    man = make_dataset(tmp_path / "data", n=2)
    ck, _ = train(man, small_cfg(), TrainConfig(epochs=1, batch=2, seed=6), tmp_path / "out", vocab=vocab)
    a = fuse_inference(ck, man, tmp_path / "fa", vocab=vocab)
    b = fuse_inference(ck, man, tmp_path / "fb", vocab=vocab)
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_fuse_whole_path_matches_direct_forward(tmp_path, vocab):
    man = make_dataset(tmp_path / "data", n=1)
    cfg = small_cfg()
    params = init_params(cfg, nm.Rng(2))
    sample = man.load_samples(vocab)[0]
    fused = fuse_sample(sample, params, cfg)
    direct = forward_full(sample, params, cfg, training=False).fused.data[0]
    np.testing.assert_array_equal(fused, direct)


def test_fuse_padded_path_matches_explicit_padding(tmp_path, vocab):
    man = make_dataset(tmp_path / "data", n=1, size=40)
    cfg = small_cfg()
    params = init_params(cfg, nm.Rng(2))
    sample = man.load_samples(vocab)[0]
    fused = fuse_sample(sample, params, cfg)  # 40 -> reflect pad to 48
    assert fused.shape == (40, 40)

    pad = ((0, 0), (4, 4), (4, 4))
    padded = replace(
        sample,
        ir=nm.Tensor(np.pad(sample.ir.data, pad, mode="reflect")),
        vi_y=nm.Tensor(np.pad(sample.vi_y.data, pad, mode="reflect")),
        vi_cbcr=None,
    )
    whole = fuse_sample(padded, params, cfg)
    np.testing.assert_array_equal(fused, whole[4:44, 4:44])


def test_fuse_rejects_unpaddable_sliver(tmp_path, vocab):
    man = make_dataset(tmp_path / "data", n=1, size=32)
    cfg = small_cfg()
    params = init_params(cfg, nm.Rng(2))
    sample = man.load_samples(vocab)[0]
    sliver = replace(
        sample,
        ir=nm.Tensor(sample.ir.data[:, :3, :]),
        vi_y=nm.Tensor(sample.vi_y.data[:, :3, :]),
        vi_cbcr=None,
    )
    with pytest.raises(DataError):
        fuse_sample(sliver, params, cfg)
