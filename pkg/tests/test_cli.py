import json

import pytest

from defer_causal.cli import main, read_config_file
from defer_causal.errors import ConfigError


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    out = d / "synth.csv"
    assert main(["synth", "--n", "3000", "--p-h0", "0.5", "--seed", "3", "--out", str(out)]) == 0
    return out


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_synth_writes_data_and_sidecar(synth_csv):
    assert synth_csv.read_text().startswith("reject_score,deferred,model_pred,human_pred,label,component")
    side = synth_csv.with_suffix(".oracle.csv")
    assert side.read_text().startswith("g_star,f_star,human_correct_prob,model_correct_prob")


def test_atd_and_catd(capsys, synth_csv):
    code, out = run(capsys, "atd", "--data", str(synth_csv))
    assert code == 0
    assert json.loads(out.out)["method"] == "atd"
    code, out = run(capsys, "catd", "--data", str(synth_csv), "--group", "component")
    cells = json.loads(out.out)
    assert code == 0 and set(cells) == {str(i) for i in range(10)}


def test_rd_calibrate_falsify(capsys, synth_csv, tmp_path):
    code, out = run(capsys, "rd", "--data", str(synth_csv), "--cutoff", "0", "--kernel", "uniform")
    assert code == 0 and json.loads(out.out)["left"]["kernel"] == "uniform"
    code, out = run(capsys, "calibrate", "--scores", str(synth_csv), "--coverage", "grid")
    assert code == 0 and len(json.loads(out.out)) == 10
    hist = tmp_path / "h.csv"
    code, out = run(capsys, "falsify", "--data", str(synth_csv), "--cutoff", "0",
                    "--placebo-seeds", "3", "--histogram-out", str(hist))
    res = json.loads(out.out)
    assert code == 0 and len(res["placebo_outcome"]) == 3
    assert len(hist.read_text().splitlines()) == 21


def test_report_with_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# synthetic run\nn = 4000\np_h0 = 0.5\ngrid = 0.3, 0.6\nfalsify = false\n")
    plots = tmp_path / "plots"
    code, out = run(capsys, "report", "--config", str(cfg), "--format", "table",
                    "--plotdata", str(plots), "--seed", "1")
    assert code == 0
    assert len(out.out.strip().splitlines()) == 4
    assert (plots / "rd.csv").exists()


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n = 3000\ngrid = 0.5\n")
    code, out = run(capsys, "report", "--config", str(cfg), "--grid", "0.2,0.4", "--falsify", "no")
    assert code == 0
    assert [r["coverage"] for r in json.loads(out.out)["rows"]] == [0.2, 0.4]


def test_config_errors_exit_nonzero(capsys, tmp_path, synth_csv):
    assert run(capsys, "report", "--grid", "0.5,0.3")[0] == 2
    assert run(capsys, "rd", "--data", str(tmp_path / "missing.csv"), "--cutoff", "0")[0] == 2
    assert run(capsys, "rd", "--data", str(synth_csv))[0] == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("just words\n")
    assert run(capsys, "report", "--config", str(bad))[0] == 2
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_estimation_failure_exit_code(capsys, tmp_path):
    p = tmp_path / "one.csv"
    p.write_text("reject_score,deferred,model_pred,human_pred,label\n0.1,0,a,b,a\n0.9,1,a,b,b\n")
    code, out = run(capsys, "atd", "--data", str(p))
    assert code == 1 and "insufficient_data" in out.err


def test_read_config_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("family-size = 665  # large family\nlabels = a,b\n")
    assert read_config_file(str(p)) == {"family_size": "665", "labels": "a,b"}
    with pytest.raises(ConfigError):
        read_config_file(str(tmp_path / "none.cfg"))


def test_log_level_env(monkeypatch, capsys):
    monkeypatch.setenv("DEFER_CAUSAL_LOG_LEVEL", "debug")
    assert main(["report", "--n", "2000", "--grid", "0.5", "--falsify", "0"]) == 0
