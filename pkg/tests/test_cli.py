import io

import numpy as np
import pytest

from ocdeepiv import cli, model, nnkit, reports, simkit
from ocdeepiv.model import LossRecord

from conftest import SMALL_CONFIG


@pytest.fixture
def small_ini(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL_CONFIG)
    return path


def _ini(tmp_path, text):
    path = tmp_path / "cfg.ini"
    path.write_text(text)
    return str(path)


# -- simulate ----------------------------------------------------------------

def test_simulate_writes_n_rows(small_ini, tmp_path):
    out = tmp_path / "sim"
    assert cli.run(["simulate", "--config", str(small_ini), "--out", str(out)]) == 0
    ds = reports.read_dataset_csv(out / "dataset.csv")
    assert ds.n == 200 and ds.Y is None
    manifest = reports.read_manifest(out / "manifest.txt")
    assert manifest["file.dataset.csv.sha256"] == reports.sha256_file(out / "dataset.csv")


def test_simulate_default_size_and_digest(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(["simulate", "--out", str(a)]) == 0
    assert cli.run(["simulate", "--out", str(b)]) == 0
    lines = (a / "dataset.csv").read_text().splitlines()
    assert len(lines) == 10001
    assert lines[0] == "z1,z2,z3,x1,x2,t,theta_true"
    assert reports.sha256_file(a / "dataset.csv") == reports.sha256_file(b / "dataset.csv")


def test_simulate_round_trips_exactly(tmp_path):
    spec = simkit.DGPSpec(kind="confounded", n=50, seed=7)
    ds = simkit.generate(spec)
    back = reports.read_dataset_csv(reports.write_dataset_csv(ds, tmp_path / "d.csv"))
    for name in ("Z", "X", "T", "Y", "theta_true"):
        assert np.array_equal(getattr(ds, name), getattr(back, name))


def test_seed_flag_changes_data(small_ini, tmp_path):
    cli.run(["simulate", "--config", str(small_ini), "--out", str(tmp_path / "a")])
    cli.run(["simulate", "--config", str(small_ini), "--out", str(tmp_path / "b"), "--seed", "4"])
    assert (tmp_path / "a" / "dataset.csv").read_bytes() != (tmp_path / "b" / "dataset.csv").read_bytes()


# -- train -------------------------------------------------------------------

def test_train_single_epoch(tmp_path):
    cfg = _ini(tmp_path, "[dgp]\nn = 60\n[train]\nepochs = 1\nswitch_epoch = 1\n"
                         "[experiment]\nplot = false\n")
    assert cli.run(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    records = reports.read_losses_csv(tmp_path / "o" / "losses.csv")
    assert len(records) == 1 and records[0].ortho is None


def test_train_outputs(small_ini, tmp_path):
    out = tmp_path / "o"
    assert cli.run(["train", "--config", str(small_ini), "--out", str(out)]) == 0
    records = reports.read_losses_csv(out / "losses.csv")
    assert [r.epoch for r in records] == [1, 2, 3, 4]
    assert records[1].ortho is None and records[2].ortho is not None
    truth, raw, smooth = reports.read_theta_csv(out / "theta.csv")
    assert truth.size == 200
    np.testing.assert_allclose(smooth, np.convolve(raw, np.ones(15) / 15, "same"),
                               rtol=0, atol=1e-12)
    assert not (out / "theta.png").exists()


def test_train_two_stage_with_plots(tmp_path):
    cfg = _ini(tmp_path, "[dgp]\nkind = confounded\nn = 120\n"
                         "[train]\nepochs = 3\nswitch_epoch = 1\n"
                         "[experiment]\ntheta_mode = two_stage\n")
    out = tmp_path / "o"
    assert cli.run(["train", "--config", cfg, "--out", str(out)]) == 0
    for name in ("losses.csv", "losses_stage1.csv", "theta.csv", "theta.png", "losses.png"):
        assert (out / name).stat().st_size > 0


def test_train_two_stage_without_y_is_runtime_error(tmp_path):
    cfg = _ini(tmp_path, "[dgp]\nn = 50\n[experiment]\ntheta_mode = two_stage\n")
    assert cli.run(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_divergence_keeps_partial_losses(tmp_path, capsys):
    cfg = _ini(tmp_path, "[dgp]\nn = 100\n[train]\nepochs = 5\nswitch_epoch = 2\nlr = 1e300\n"
                         "[experiment]\nplot = false\n")
    out = tmp_path / "o"
    assert cli.run(["train", "--config", cfg, "--out", str(out)]) == 2
    assert "epoch 2" in capsys.readouterr().err
    records = reports.read_losses_csv(out / "losses.csv")
    assert [r.epoch for r in records] == [1]


def test_config_error_exit_code(tmp_path, capsys):
    cfg = _ini(tmp_path, "[train]\nepoch = 3\n")
    assert cli.run(["train", "--config", cfg]) == 1
    assert "line 2" in capsys.readouterr().err


# -- compare -----------------------------------------------------------------

def test_compare_single_estimator(tmp_path):
    cfg = _ini(tmp_path, "[dgp]\nkind = confounded\nn = 300\n"
                         "[experiment]\nestimators = NaiveOLS\n")
    out = tmp_path / "o"
    assert cli.run(["compare", "--config", cfg, "--out", str(out)]) == 0
    rows = reports.read_comparison_csv(out / "comparison.csv")
    assert len(rows) == 1 and rows[0]["status"] == "ok" and rows[0]["rank"] == "1"
    assert "wall_time.NaiveOLS" in reports.read_manifest(out / "manifest.txt")


def test_compare_reports_missing_outcome(tmp_path):
    cfg = _ini(tmp_path, "[dgp]\nn = 100\n[train]\nepochs = 2\nswitch_epoch = 1\n"
                         "[experiment]\nestimators = TwoSLS, OCDeepIV_CodeFaithful\n")
    out = tmp_path / "o"
    assert cli.run(["compare", "--config", cfg, "--out", str(out)]) == 0
    rows = reports.read_comparison_csv(out / "comparison.csv")
    assert rows[0]["status"] == "failed: requires Y" and rows[0]["rank"] == ""
    assert rows[1]["status"] == "ok"


def test_compare_digest_reproducible(tmp_path):
    cfg = _ini(tmp_path, "[dgp]\nkind = confounded\nn = 300\n"
                         "[experiment]\nestimators = NaiveOLS, TwoSLS, LinearDML\n"
                         "replications = 2\n")
    for name in ("a", "b"):
        cli.run(["compare", "--config", cfg, "--out", str(tmp_path / name)])
    assert ((tmp_path / "a" / "comparison.csv").read_bytes()
            == (tmp_path / "b" / "comparison.csv").read_bytes())


# -- gradcheck ---------------------------------------------------------------

def test_gradcheck_layer_scope(capsys):
    assert cli.run(["gradcheck", "--scope", "layer:batchnorm"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 1 and out[0].startswith("PASS batchnorm")


def test_gradcheck_detects_broken_backward(monkeypatch):
    real = nnkit.linear_backward

    def broken(layer, x, upstream):
        dx, dW, db = real(layer, x, upstream)
        return dx, 1.1 * dW, db

    monkeypatch.setattr(nnkit, "linear_backward", broken)
    stream = io.StringIO()
    assert cli.cmd_gradcheck("linear", stream=stream) == 3
    assert stream.getvalue().startswith("FAIL linear")


def test_gradcheck_bad_scope():
    assert cli.run(["gradcheck", "--scope", "layer:conv"]) == 1


# -- plot --------------------------------------------------------------------

def _plot_inputs(tmp_path, n=120):
    rng = np.random.default_rng(0)
    truth, raw = rng.standard_normal(n), rng.standard_normal(n)
    reports.write_theta_csv(truth, raw, model.moving_average(raw, 15), tmp_path / "theta.csv")
    records = [LossRecord(e, 1.0 / e + (0.5 if e > 5 else 0.0), 1.0 / e, 0.5 if e > 5 else 0.0)
               for e in range(1, 11)]
    reports.write_losses_csv(records, 5, tmp_path / "losses.csv")


def test_plot_writes_two_images(tmp_path):
    _plot_inputs(tmp_path)
    assert cli.run(["plot", "--out", str(tmp_path)]) == 0
    for name in ("theta.png", "losses.png"):
        assert (tmp_path / name).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_plot_is_byte_deterministic(tmp_path):
    _plot_inputs(tmp_path)
    cli.run(["plot", "--out", str(tmp_path)])
    first = (tmp_path / "theta.png").read_bytes(), (tmp_path / "losses.png").read_bytes()
    cli.run(["plot", "--out", str(tmp_path)])
    assert first == ((tmp_path / "theta.png").read_bytes(), (tmp_path / "losses.png").read_bytes())


def test_plot_malformed_csv_names_row(tmp_path, capsys):
    _plot_inputs(tmp_path)
    text = (tmp_path / "theta.csv").read_text().splitlines()
    text[3] = "2,abc,0.1,0.2"
    (tmp_path / "theta.csv").write_text("\n".join(text) + "\n")
    assert cli.run(["plot", "--out", str(tmp_path)]) == 2
    assert "row 4" in capsys.readouterr().err


def test_plot_missing_input(tmp_path):
    assert cli.run(["plot", "--out", str(tmp_path)]) == 2


# -- csv readers -------------------------------------------------------------

def test_losses_round_trip(tmp_path):
    records = [LossRecord(1, 0.1, 0.1, 0.0), LossRecord(2, 2.75, 0.25, 2.5)]
    back = reports.read_losses_csv(reports.write_losses_csv(records, 1, tmp_path / "l.csv"))
    assert back[0].ortho is None and back[1] == records[1]


def test_bad_header_rejected(tmp_path):
    (tmp_path / "l.csv").write_text("epoch,total\n1,2\n")
    with pytest.raises(reports.CSVFormatError, match="row 1"):
        reports.read_losses_csv(tmp_path / "l.csv")
