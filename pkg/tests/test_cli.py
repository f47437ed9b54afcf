import csv

import matplotlib.image as mpimg
import numpy as np
import pytest

from ptrppo import approximator as ax
from ptrppo.cli import COMPARISON_HEADER, METRICS_HEADER, main
from ptrppo.config import TrainConfig, load_config
from ptrppo.plotting import read_matrix_csv

from oracles import random_walk_success

SMALL = ["--env", "chain", "--iterations", "40", "--memory", "16", "--off-iters", "2",
         "--set", "num_envs=2", "--set", "eval_interval=200", "--set", "eval_episodes=2"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def train_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert main(["train", *SMALL, "--seed", "7", "--out", str(out)]) == 0
    return out


def test_train_writes_outputs(train_dir):
    for name in ("config.txt", "metrics.csv", "heatmap.csv", "checkpoint.ckpt", "final.ckpt",
                 "learning_curve.png", "heatmap.png", "summary.txt"):
        assert (train_dir / name).exists(), name
    assert (train_dir / "status.txt").read_text().strip() == "complete"
    rows = _rows(train_dir / "metrics.csv")
    assert rows[0] == METRICS_HEADER
    assert [int(r[0]) for r in rows[1:]] == [208, 400, 608]


def test_heatmap_csv_shape(train_dir):
    rows = _rows(train_dir / "heatmap.csv")
    assert rows[0] == [f"p{i}" for i in range(16)]
    assert len(rows) == 1 + 40 * 2
    assert all(len(r) == 16 for r in rows)


def test_metrics_reproducible(train_dir, tmp_path):
    assert main(["train", *SMALL, "--seed", "7", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "metrics.csv").read_bytes() == (train_dir / "metrics.csv").read_bytes()
    assert (tmp_path / "heatmap.csv").read_bytes() == (train_dir / "heatmap.csv").read_bytes()


def test_config_roundtrip(train_dir):
    cfg = load_config(train_dir / "config.txt")
    assert cfg.memory_capacity == 16 and cfg.seed == 7 and cfg.env == "chain"
    assert load_config(None, {}) == TrainConfig()


def test_steps_flag_sets_iterations(tmp_path):
    assert main(["train", "--env", "chain", "--steps", "96", "--set", "num_envs=4",
                 "--out", str(tmp_path)]) == 0
    assert load_config(tmp_path / "config.txt").max_iterations == 3


def test_bad_config_exit_code(tmp_path, capsys):
    assert main(["train", "--set", "clip_eps=-1", "--out", str(tmp_path)]) == 2
    assert "clip_eps" in capsys.readouterr().err
    assert main(["train", "--set", "no_such_key=1", "--out", str(tmp_path)]) == 2


def test_compare(tmp_path):
    code = main(["compare", *SMALL, "--iterations", "15", "--algorithms", "ptr-mean,ppo",
                 "--seeds", "3", "--out", str(tmp_path)])
    assert code == 0
    rows = _rows(tmp_path / "comparison.csv")
    assert rows[0] == COMPARISON_HEADER
    assert [r[0] for r in rows[1:]] == ["ptr-mean", "ppo"]
    assert all(r[1] == "1" and float(r[3]) == 0.0 for r in rows[1:])
    assert (tmp_path / "learning_curves.png").exists()
    assert (tmp_path / "ppo" / "seed_3" / "metrics.csv").exists()


def test_eval_rejects_zero_episodes(train_dir):
    assert main(["eval", "--checkpoint", str(train_dir / "final.ckpt"), "--env", "chain",
                 "--episodes", "0"]) == 2


def test_eval_dimension_mismatch(train_dir):
    assert main(["eval", "--checkpoint", str(train_dir / "final.ckpt"), "--env", "gridworld"]) == 1


def test_eval_missing_checkpoint(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "nope.ckpt"), "--env", "chain"]) == 1


def test_untrained_eval_near_random_walk(tmp_path, capsys):
    # the initial policy head is near uniform, so success matches a random walk
    cfg = TrainConfig(env="chain")
    params = ax.init_params(10, 2, np.random.default_rng(0), 64)
    ax.save_checkpoint(params, tmp_path / "init.ckpt")
    (tmp_path / "c.txt").write_text(cfg.to_text())
    n = 2000
    assert main(["eval", "--checkpoint", str(tmp_path / "init.ckpt"), "--config",
                 str(tmp_path / "c.txt"), "--episodes", str(n)]) == 0
    mean = float(capsys.readouterr().out.split()[2])
    p = random_walk_success("chain", 10, 50)
    assert abs(mean - p) < 4 * np.sqrt(p * (1 - p) / n) + 0.02


def test_heatmap_render_shape(train_dir, tmp_path):
    out = tmp_path / "h.png"
    assert main(["heatmap-render", str(train_dir / "heatmap.csv"), str(out), "--cell-size", "3"]) == 0
    img = mpimg.imread(out)
    assert img.shape[:2] == (80 * 3, 16 * 3)


def test_heatmap_render_constant_matrix(tmp_path):
    src = tmp_path / "c.csv"
    src.write_text("p0,p1,p2\n" + "2.0,2.0,2.0\n" * 4)
    out = tmp_path / "c.png"
    assert main(["heatmap-render", str(src), str(out)]) == 0
    img = mpimg.imread(out)
    assert img.shape[:2] == (32, 24)
    assert len(np.unique(img.reshape(-1, img.shape[2]), axis=0)) == 1


def test_heatmap_render_ragged(tmp_path):
    src = tmp_path / "r.csv"
    src.write_text("p0,p1\n1,2\n3\n")
    assert main(["heatmap-render", str(src), str(tmp_path / "r.png")]) == 1


def test_read_matrix_csv_empty(tmp_path):
    src = tmp_path / "e.csv"
    src.write_text("p0,p1\n")
    assert read_matrix_csv(src).shape[0] == 0
