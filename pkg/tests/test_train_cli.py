"""Training loop, evaluation, prediction and the command line."""

import numpy as np
import pytest

from dtrattunet.checkpoint import load_checkpoint
from dtrattunet.cli import main
from dtrattunet.data import generate_samples, generate_synthetic, read_ppm, read_pgm, write_pgm
from dtrattunet.losses import LossWeights
from dtrattunet.model import VARIANTS, build_model
from dtrattunet.optim import Adam
from dtrattunet.train import (
    TrainConfig,
    evaluate,
    evaluate_samples,
    overlay,
    predict,
    train,
    train_step,
)
from dtrattunet.data.loader import batch_iter
from conftest import tiny_config, warm_up


@pytest.fixture(scope="module")
def samples():
    s = generate_samples(12, 32, "binary", seed=5)
    return s[:8], s[8:]


def _cfg(tmp_path, **kw):
    kw.setdefault("epochs", 2)
    kw.setdefault("batch", 4)
    return TrainConfig(seed=1, out_dir=str(tmp_path), **kw)


def test_train_writes_log_and_checkpoints(tmp_path, samples):
    result = train(tiny_config(), _cfg(tmp_path), *samples)
    lines = (tmp_path / "run.log").read_text().splitlines()
    assert lines == result.log_lines and len(lines) == 2
    assert lines[0].startswith("epoch=1 train_loss=") and " val_dice=" in lines[0]
    assert (tmp_path / "best.ckpt").exists()
    ck = load_checkpoint(tmp_path / "final.ckpt")
    assert ck.epoch == 2 and ck.optimizer is not None and "adam.step" in ck.optimizer


def test_training_is_deterministic(tmp_path, samples):
    train(tiny_config(), _cfg(tmp_path / "a"), *samples)
    train(tiny_config(), _cfg(tmp_path / "b"), *samples)
    for name in ("run.log", "best.ckpt", "final.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_checkpoint_round_trip_preserves_evaluation(tmp_path, samples):
    model = build_model(tiny_config(), 0)
    opt = Adam(model.named_parameters())
    for batch in batch_iter(samples[0], 4, train=True, seed=0):
        train_step(model, opt, batch, LossWeights())
    from dtrattunet.checkpoint import save_checkpoint

    save_checkpoint(tmp_path / "m.ckpt", model)
    before = evaluate_samples(model, samples[1]).to_text()
    assert evaluate(tmp_path / "m.ckpt", samples[1]).to_text() == before


@pytest.mark.parametrize("variant", sorted(VARIANTS))
def test_every_variant_trains_one_step(variant, samples):
    model = build_model(tiny_config(variant), 0)
    opt = Adam(model.named_parameters())
    before = {n: p.data.copy() for n, p in model.named_parameters()}
    batch = next(batch_iter(samples[0], 4, train=True, seed=0))
    loss = train_step(model, opt, batch, LossWeights())
    assert np.isfinite(loss)
    assert any(not np.array_equal(before[n], p.data) for n, p in model.named_parameters())


def test_self_consistent_evaluation(samples):
    model = warm_up(build_model(tiny_config(), 0), 32)
    from dtrattunet.data.manifest import SegmentationSample, stack_channels
    from dtrattunet.train import predict_arrays

    imgs = np.stack([stack_channels(s.image, 3) for s in samples[1]])
    les, org = predict_arrays(model, imgs)
    as_gt = [SegmentationSample(s.id, s.image, l, o) for s, l, o in zip(samples[1], les, org)]
    rep = evaluate_samples(model, as_gt)
    s = rep.classes["lesion.1"]
    assert s.dice == 100.0 and s.hd95 in (0.0, None)
    if any(l.any() for l in les):
        assert s.f1 == s.iou == 100.0


def test_background_predictor_scores_zero_f1(samples):
    model = warm_up(build_model(tiny_config("unet"), 0), 32)
    head = model.decoder.lesion.head
    head.weight.data[:] = 0
    head.bias.data[:] = -10
    rep = evaluate_samples(model, samples[0])
    assert rep.classes["lesion.1"].f1 == 0.0


def test_overlay_colours():
    img = np.linspace(0, 1, 16).reshape(4, 4)
    plain = overlay(img, np.zeros((4, 4), np.uint8), np.zeros((4, 4), np.uint8))
    np.testing.assert_array_equal(plain[..., 0], plain[..., 2])
    np.testing.assert_array_equal(plain[..., 0], np.rint(img * 255))
    les = np.zeros((4, 4), np.uint8)
    les[1, 1], les[2, 2] = 1, 2
    organ = np.ones((4, 4), np.uint8)
    rgb = overlay(img, les, organ)
    assert rgb[1, 1].tolist() == [0, 255, 0] and rgb[2, 2].tolist() == [255, 0, 0]
    assert rgb[0, 0].tolist() == [0, 0, 255]


def test_predict_outputs(tmp_path, samples):
    model = warm_up(build_model(tiny_config(), 0), 32)
    from dtrattunet.checkpoint import save_checkpoint

    save_checkpoint(tmp_path / "m.ckpt", model)
    write_pgm(tmp_path / "in.pgm", samples[1][0].image[0])
    paths = predict(tmp_path / "m.ckpt", tmp_path / "in.pgm", tmp_path / "out")
    les = read_pgm(paths["lesion"], "mask")
    assert les.shape == (32, 32) and set(np.unique(les)) <= {0, 1}
    assert read_pgm(paths["organ"], "mask").shape == (32, 32)
    assert read_ppm(paths["overlay"]).shape == (32, 32, 3)
    write_pgm(tmp_path / "odd.pgm", np.zeros((20, 32)))
    with pytest.raises(ValueError):
        predict(tmp_path / "m.ckpt", tmp_path / "odd.pgm", tmp_path / "out")


def test_gamma_zero_freezes_organ_decoder(tmp_path, samples):
    model = build_model(tiny_config(), 0)
    opt = Adam(model.named_parameters())
    organ = {n: p.data.copy() for n, p in model.named_parameters() if n.startswith("decoder.organ.")}
    for step, batch in enumerate(batch_iter(samples[0] * 3, 4, train=True, seed=0)):
        if step == 5:
            break
        train_step(model, opt, batch, LossWeights(gamma=0.0))
    for n, p in model.named_parameters():
        if n in organ:
            assert p.data.tobytes() == organ[n].tobytes(), n


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=-1)
    r = TrainConfig.paper_recipe()
    assert (r.epochs, r.batch, r.lr) == (100, 16, 0.1)
    d = TrainConfig()
    assert (d.epochs, d.batch, d.lr) == (30, 8, 1e-3)


def test_train_rejects_class_mismatch(samples):
    multi = generate_samples(4, 32, "multi", seed=2)
    with pytest.raises(ValueError):
        train(tiny_config(), TrainConfig(epochs=1), multi, multi)


# --- CLI ------------------------------------------------------------------------------------


def test_cli_generate_deterministic(tmp_path):
    assert main(["generate-data", "--count", "10", "--seed", "7", "--size", "32", "--out", str(tmp_path / "a")]) == 0
    assert main(["generate-data", "--count", "10", "--seed", "7", "--size", "32", "--out", str(tmp_path / "b")]) == 0
    for f in sorted((tmp_path / "a").rglob("*")):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_cli_usage_errors(capsys):
    assert main(["train", "--bogus"]) == 1
    assert main([]) == 1
    assert main(["params", "--variant", "nope"]) == 1
    err = capsys.readouterr().err
    assert "usage" in err


def test_cli_params(capsys):
    assert main(["params", "--variant", "dtrattunet", "--size", "224", "--base-width", "64"]) == 0
    out = capsys.readouterr().out
    assert "transformer" in out and "total" in out
    assert "187,957,594" in out


def test_cli_train_eval_predict(tmp_path, capsys):
    data = tmp_path / "data"
    generate_synthetic(data, 10, 32, seed=1)
    run = tmp_path / "run"
    args = ["train", "--data", str(data), "--out", str(run), "--size", "32", "--base-width", "2", "--epochs", "1"]
    assert main(args + ["--batch", "4", "--variant", "dattunet"]) == 0
    assert (run / "run.log").exists()
    assert main(["eval", "--checkpoint", str(run / "best.ckpt"), "--data", str(data), "--out", str(tmp_path / "m.txt")]) == 0
    assert "lesion.1.dice=" in (tmp_path / "m.txt").read_text()
    image = data / "images" / "s00000.pgm"
    assert main(["predict", "--checkpoint", str(run / "best.ckpt"), str(image), "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "s00000_overlay.ppm").exists()


def test_cli_bad_magic_exit_code(tmp_path):
    data = tmp_path / "data"
    generate_synthetic(data, 5, 32, seed=1)
    bad = tmp_path / "bad.ckpt"
    model = build_model(tiny_config(), 0)
    from dtrattunet.checkpoint import save_checkpoint

    save_checkpoint(bad, model)
    blob = bytearray(bad.read_bytes())
    blob[0] ^= 0xFF
    bad.write_bytes(bytes(blob))
    assert main(["eval", "--checkpoint", str(bad), "--data", str(data)]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "missing"), "--data", str(data)]) == 2


def test_cli_gradcheck(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "conv2d_3x3" in out
