import filecmp
import json
import struct
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from ccglearn.harness import cli, data, experiment, idx, plotting, seeds


# ---------------------------------------------------------------------------
# seed derivation
# ---------------------------------------------------------------------------

def test_splitmix_deterministic_and_decoupled():
    assert seeds.splitmix64(1, 2) == seeds.splitmix64(1, 2)
    outs = {seeds.splitmix64(0, s) for s in range(1000)}
    assert len(outs) == 1000
    assert all(0 <= o < 2 ** 64 for o in outs)


def test_derive_chains_streams():
    assert seeds.derive(5) == 5
    assert seeds.derive(5, 1) == seeds.splitmix64(5, 1)
    assert seeds.derive(5, 1, 2) == seeds.splitmix64(seeds.splitmix64(5, 1), 2)
    assert seeds.derive(5, 1, 2) != seeds.derive(5, 2, 1)


# ---------------------------------------------------------------------------
# mixture data
# ---------------------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError):
        data.GaussianMixtureSpec(np.zeros((2, 2)), 0.5, [0.5, 0.5])  # equal means
    with pytest.raises(ValueError):
        data.ring_mixture_spec(3, sigma=0.0)
    with pytest.raises(ValueError):
        data.GaussianMixtureSpec(np.eye(2), 0.5, [0.7, 0.7])


def test_ring_spec_geometry():
    spec = data.ring_mixture_spec(4, radius=2.0)
    np.testing.assert_allclose(np.linalg.norm(spec.means, axis=1), 2.0)
    np.testing.assert_allclose(spec.means[0], [2.0, 0.0], atol=1e-12)
    assert spec.K == 4 and spec.d == 2


def test_sigma_to_zero_limit_collapses_to_means():
    spec = data.ring_mixture_spec(5, sigma=1e-12)
    x, y = data.gen_mixture(spec, 500, 0)
    np.testing.assert_allclose(x, spec.means[y], atol=1e-10)


def test_mixture_class_counts_binomial():
    spec = data.ring_mixture_spec(4)
    _, y = data.gen_mixture(spec, 100000, 1)
    counts = np.bincount(y, minlength=4)
    sigma = np.sqrt(100000 * 0.25 * 0.75)
    assert np.all(np.abs(counts - 25000) < 3 * sigma)


def test_mixture_deterministic_and_min_size():
    spec = data.ring_mixture_spec(3)
    a = data.gen_mixture(spec, 50, 7)
    b = data.gen_mixture(spec, 50, 7)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    with pytest.raises(ValueError):
        data.gen_mixture(spec, 2, 0)


def test_bayes_rule_recovers_component_means():
    spec = data.ring_mixture_spec(6, sigma=0.2)
    assert np.array_equal(data.bayes_rule(spec, spec.means), np.arange(6))


def test_bayes_rule_respects_prior():
    # strongly skewed prior flips the decision at the midpoint
    spec = data.GaussianMixtureSpec([[-1.0], [1.0]], 1.0, [0.99, 0.01])
    assert data.bayes_rule(spec, np.array([[0.1]]))[0] == 0


def test_bayes_accuracy_matches_numerical_integration():
    # independent oracle: trapezoid integration of the class-0 posterior cell
    spec = data.ring_mixture_spec(4, radius=2.0, sigma=0.3)
    grid = np.arange(-4.0, 4.0, 0.02) + 0.01
    gx, gy = np.meshgrid(grid, grid)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    decide = data.bayes_rule(spec, pts)
    d2 = ((pts - spec.means[0]) ** 2).sum(axis=1)
    dens = np.exp(-d2 / (2 * 0.3 ** 2)) / (2 * np.pi * 0.3 ** 2)
    acc_integral = float(np.sum(dens[decide == 0]) * 0.02 * 0.02)

    x, y = data.gen_mixture(spec, 200000, 3)
    acc_mc = data.bayes_accuracy_oracle(spec, x, y)
    assert acc_mc == pytest.approx(acc_integral, abs=0.005)


# ---------------------------------------------------------------------------
# IDX parsing
# ---------------------------------------------------------------------------

def write_idx_pair(tmp_path, n=2, rows=2, cols=2):
    pixels = bytes(range(n * rows * cols))
    img = tmp_path / "images.idx"
    img.write_bytes(struct.pack(">IIII", idx.IMAGE_MAGIC, n, rows, cols) + pixels)
    lab = tmp_path / "labels.idx"
    lab.write_bytes(struct.pack(">II", idx.LABEL_MAGIC, n) + bytes([3, 7][:n]))
    return img, lab


def test_idx_round_trip(tmp_path):
    img, lab = write_idx_pair(tmp_path)
    x, y = idx.load_idx(img, lab)
    assert x.shape == (2, 4)
    np.testing.assert_allclose(x[0], [0, 1 / 255, 2 / 255, 3 / 255])
    np.testing.assert_allclose(x[1], [4 / 255, 5 / 255, 6 / 255, 7 / 255])
    assert y.tolist() == [3, 7]
    assert x.dtype == np.float64 and y.dtype == np.int64


def test_idx_bad_magic_reports_offset(tmp_path):
    p = tmp_path / "bad.idx"
    p.write_bytes(struct.pack(">IIII", 0xDEADBEEF, 1, 1, 1) + b"\x00")
    with pytest.raises(idx.IdxParseError) as err:
        idx.load_idx_images(p)
    assert err.value.offset == 0
    with pytest.raises(idx.IdxParseError):
        idx.load_idx_labels(p)


def test_idx_truncated_payload(tmp_path):
    p = tmp_path / "short.idx"
    p.write_bytes(struct.pack(">IIII", idx.IMAGE_MAGIC, 2, 2, 2) + b"\x00" * 3)
    with pytest.raises(idx.IdxParseError, match="truncated"):
        idx.load_idx_images(p)


def test_idx_count_mismatch(tmp_path):
    img, _ = write_idx_pair(tmp_path, n=2)
    lab = tmp_path / "one.idx"
    lab.write_bytes(struct.pack(">II", idx.LABEL_MAGIC, 1) + b"\x05")
    with pytest.raises(idx.IdxParseError, match="count"):
        idx.load_idx(img, lab)


# ---------------------------------------------------------------------------
# plotting
# ---------------------------------------------------------------------------

def test_samples_csv_round_trip(tmp_path):
    path = tmp_path / "samples.csv"
    real = np.array([[0.1, 0.2], [0.3, 0.4]])
    gen = np.array([[1.5, -2.5]])
    plotting.write_samples_csv(path, real, [0, 1], gen, [1])
    got_real, got_gen = plotting.read_samples_csv(path)
    assert got_real == [(0.1, 0.2, 0), (0.3, 0.4, 1)]
    assert got_gen == [(1.5, -2.5, 1)]


def test_svg_is_well_formed_and_marks_kinds(tmp_path):
    csv_path = tmp_path / "samples.csv"
    rng = np.random.default_rng(0)
    plotting.write_samples_csv(csv_path, rng.standard_normal((10, 2)),
                               rng.integers(0, 3, 10),
                               rng.standard_normal((5, 2)),
                               rng.integers(0, 3, 5))
    svg_path = tmp_path / "plot.svg"
    plotting.emit_scatter_svg(csv_path, svg_path)
    root = ET.parse(svg_path).getroot()
    ns = "{http://www.w3.org/2000/svg}"
    circles = root.findall(f"{ns}circle")
    crosses = root.findall(f"{ns}path")
    legend = root.findall(f"{ns}text")
    assert len(crosses) == 5
    assert len(circles) == 10 + len(legend)  # data circles plus legend keys
    assert len(legend) == 3


def test_plot_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("x,y,label,kind\n")
    with pytest.raises(plotting.PlotError):
        plotting.emit_scatter_svg(empty, tmp_path / "out.svg")
    with pytest.raises(plotting.PlotError):
        plotting.require_2d(np.zeros((4, 3)))
    plotting.require_2d(np.zeros((4, 2)))


# ---------------------------------------------------------------------------
# experiment grid
# ---------------------------------------------------------------------------

def tiny_config(out_dir, **overrides):
    base = dict(name="tiny", K=3, n=90, n_test=60, r_l=[0.5, 1.0],
                methods=["ordinary", "dcl"], seeds=[0, 1], dcl_epochs=2,
                warmup_epochs=1, joint_epochs=1, batch_size=32,
                out_dir=str(out_dir))
    base.update(overrides)
    return experiment.ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(experiment.ConfigError):
        tiny_config("x", methods=["svm"])
    with pytest.raises(experiment.ConfigError):
        tiny_config("x", r_l=[0.0])
    with pytest.raises(experiment.ConfigError):
        tiny_config("x", seeds=[])
    with pytest.raises(experiment.ConfigError):
        tiny_config("x", m_mode="oracle")


def test_config_json_round_trip_rejects_unknown_keys(tmp_path):
    cfg = tiny_config(tmp_path)
    path = tmp_path / "config.json"
    cfg.to_json(path)
    loaded = experiment.ExperimentConfig.from_json(path)
    assert loaded == cfg
    raw = json.loads(path.read_text())
    raw["granularity"] = 3
    path.write_text(json.dumps(raw))
    with pytest.raises(experiment.ConfigError, match="granularity"):
        experiment.ExperimentConfig.from_json(path)


def test_run_cell_row_shape():
    cfg = tiny_config("unused")
    row = experiment.run_cell(cfg, "dcl", 1.0, 0)
    assert set(row) == {"method", "r_l", "seed", "accuracy", "bayes"}
    assert 0.0 <= row["accuracy"] <= 1.0
    assert row["bayes"] >= row["accuracy"] - 0.5


def test_cell_failure_is_recorded_not_raised():
    cfg = tiny_config("unused", n=90)
    row = experiment._cell_wrapper(
        ({**experiment.asdict(cfg), "n_test": 0}, "dcl", 1.0, 0))
    assert "error" in row
    assert np.isnan(row["accuracy"])


def test_grid_rerun_is_byte_identical(tmp_path):
    out1 = run = experiment.run_experiment(tiny_config(tmp_path / "a"))
    cfg2 = experiment.ExperimentConfig.from_json(
        tmp_path / "a" / "resolved_config.json")
    cfg2.out_dir = str(tmp_path / "b")
    out2 = experiment.run_experiment(cfg2)
    for name in ("metrics.csv", "summary.csv"):
        assert filecmp.cmp(f"{out1}/{name}", f"{out2}/{name}", shallow=False)


def test_grid_parallel_matches_serial(tmp_path):
    serial = experiment.run_experiment(tiny_config(tmp_path / "s"))
    parallel = experiment.run_experiment(tiny_config(tmp_path / "p"), workers=2)
    assert filecmp.cmp(f"{serial}/metrics.csv", f"{parallel}/metrics.csv",
                       shallow=False)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_end_to_end(tmp_path, capsys):
    ds_path = str(tmp_path / "ring.bin")
    assert cli.main(["gen-data", "--k", "3", "--n", "90", "--seed", "0",
                     "--out", ds_path]) == 0
    assert cli.main(["estimate-prior", "--data", ds_path]) == 0
    payload = json.loads(capsys.readouterr().out.split("\n", 1)[1])
    assert abs(sum(payload["estimate"]) - 1.0) < 1e-9
    out_dir = str(tmp_path / "run")
    assert cli.main(["train-dcl", "--data", ds_path, "--epochs", "2",
                     "--out", out_dir]) == 0
    assert (tmp_path / "run" / "report.csv").exists()
    assert (tmp_path / "run" / "classifier.ckpt").exists()


def test_cli_train_ccgan_writes_samples(tmp_path):
    ds_path = str(tmp_path / "ring.bin")
    assert cli.main(["gen-data", "--k", "3", "--n", "90", "--out", ds_path]) == 0
    out_dir = str(tmp_path / "gan")
    assert cli.main(["train-ccgan", "--data", ds_path, "--warmup-epochs", "1",
                     "--joint-epochs", "1", "--out", out_dir]) == 0
    assert (tmp_path / "gan" / "bundle.ckpt").exists()
    assert (tmp_path / "gan" / "samples.svg").exists()


def test_cli_verify_bound_and_plot(tmp_path):
    report_path = str(tmp_path / "bound.json")
    assert cli.main(["verify-bound", "--instances", "20",
                     "--out", report_path]) == 0
    payload = json.loads((tmp_path / "bound.json").read_text())
    assert payload["all_hold"] is True

    csv_path = tmp_path / "samples.csv"
    plotting.write_samples_csv(csv_path, np.zeros((3, 2)), [0, 1, 2],
                               np.ones((2, 2)), [0, 1])
    assert cli.main(["plot", "--samples", str(csv_path),
                     "--out", str(tmp_path / "x.svg")]) == 0


def test_cli_run_grid(tmp_path):
    cfg = tiny_config(tmp_path / "grid", methods=["dcl"], r_l=[1.0], seeds=[0])
    cfg_path = tmp_path / "cfg.json"
    cfg.to_json(cfg_path)
    assert cli.main(["run-grid", "--config", str(cfg_path)]) == 0
    assert (tmp_path / "grid" / "metrics.csv").exists()


def test_cli_errors_return_nonzero(tmp_path, capsys):
    assert cli.main(["train-dcl", "--data", str(tmp_path / "missing.bin"),
                     "--out", str(tmp_path)]) == 1
    assert "error:" in capsys.readouterr().err
