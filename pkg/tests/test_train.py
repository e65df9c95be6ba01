import numpy as np
import pytest

from gldfn.config import TrainConfig, build_train_config, parse_config_text
from gldfn.network import NetworkConfig
from gldfn.train import TrainingDiverged, train, write_loss_csv
from gldfn.weights_io import load_weights
from toyimages import write_toy_dataset


@pytest.fixture(scope="module")
def hr_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("hr_train")
    write_toy_dataset(str(d), 3, size=64)
    return str(d)


def smoke_cfg(**kw):
    base = dict(
        net=NetworkConfig(scale=2, channels=8, n_groups=1, n_modules_per_group=1,
                          n_shallow_rb=1, n_kernels=2),
        patch=12, batch=2, iters=12, seed=9, log_every=2, checkpoint_every=0)
    base.update(kw)
    return TrainConfig(**base)


def test_smoke_run_writes_weights_and_log(hr_dir, tmp_path):
    out = str(tmp_path / "w.gldf")
    log = train(smoke_cfg(), hr_dir, out)
    assert log[0]["iter"] == 1 and log[-1]["iter"] == 12
    assert all(np.isfinite(e["loss"]) for e in log)
    store = load_weights(out)
    assert len(store) > 0
    csv_path = str(tmp_path / "loss.csv")
    write_loss_csv(log, csv_path)
    lines = open(csv_path).read().splitlines()
    assert lines[0] == "iter,loss,lr"
    assert len(lines) == len(log) + 1


def test_same_seed_identical_loss_curves(hr_dir, tmp_path):
    log1 = train(smoke_cfg(), hr_dir, str(tmp_path / "a.gldf"))
    log2 = train(smoke_cfg(), hr_dir, str(tmp_path / "b.gldf"))
    assert [e["loss"] for e in log1] == [e["loss"] for e in log2]
    w1 = load_weights(str(tmp_path / "a.gldf"))
    w2 = load_weights(str(tmp_path / "b.gldf"))
    for name in w1.names():
        np.testing.assert_array_equal(w1[name].data, w2[name].data)


def test_different_seed_differs(hr_dir, tmp_path):
    log1 = train(smoke_cfg(), hr_dir, str(tmp_path / "a.gldf"))
    log2 = train(smoke_cfg(seed=10), hr_dir, str(tmp_path / "b.gldf"))
    assert [e["loss"] for e in log1] != [e["loss"] for e in log2]


def test_lr_schedule_applied(hr_dir, tmp_path):
    cfg = smoke_cfg(iters=8, lr_halve_every=3, log_every=1)
    log = train(cfg, hr_dir, str(tmp_path / "w.gldf"))
    by_iter = {e["iter"]: e["lr"] for e in log}
    lr0 = cfg.lr0
    for it, lr in by_iter.items():
        assert lr == lr0 * 0.5 ** ((it - 1) // 3)


def test_checkpoints_written(hr_dir, tmp_path):
    out = str(tmp_path / "w.gldf")
    train(smoke_cfg(iters=9, checkpoint_every=4), hr_dir, out)
    assert (tmp_path / "w.gldf.ckpt-4").exists()
    assert (tmp_path / "w.gldf.ckpt-8").exists()
    load_weights(str(tmp_path / "w.gldf.ckpt-4"))


def test_divergence_aborts_with_iteration(hr_dir, tmp_path):
    cfg = smoke_cfg(iters=30, lr0=1e6)  # absurd step size blows the loss up
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(TrainingDiverged) as exc:
            train(cfg, hr_dir, str(tmp_path / "w.gldf"))
    assert "iteration" in str(exc.value)


class TestConfigFile:
    def test_parse_and_build(self):
        text = """
        # comment
        net.scale = 2
        net.channels = 8
        train.iters = 50
        train.setting = aniso
        batch = 3          # bare keys allowed too
        augment = false
        width_range = 1.0,2.0
        """
        cfg = build_train_config(parse_config_text(text))
        assert cfg.net.scale == 2 and cfg.net.channels == 8
        assert cfg.iters == 50 and cfg.setting == "aniso"
        assert cfg.batch == 3 and cfg.augment is False
        assert cfg.width_range == (1.0, 2.0)

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            build_train_config({"net.bogus": 1})
        with pytest.raises(ValueError):
            build_train_config({"no_such_field": 1})

    def test_malformed_line_rejected(self):
        with pytest.raises(ValueError):
            parse_config_text("net.scale 2\n")

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            build_train_config({"setting": "bogus"})
        with pytest.raises(ValueError):
            build_train_config({"iters": 0})
