import csv
import json
import subprocess
import sys

import pytest

from xyfluct import config
from xyfluct.cli import (bundled_config, bundled_names, emit_report, main, read_samples,
                         run_experiment)
from xyfluct.config import ConfigError

SMALL_SAMPLE = """
[run]
id = tiny
seed = 5
stages = sample, vortices, fluct, contour

[model]
model = xy
eps = 0.125
schedule = 10, 19

[sampling]
chains = 2
burnin = 100
samples = 600
thin = 1

[fluct]
phi = sine
tgrid = 0.0, 0.5, 1.0

[contour]
a = 0.2, 0.3, 0.4
"""


@pytest.mark.parametrize("name", bundled_names())
def test_bundled_configs_round_trip(name):
    cfg = config.loads(bundled_config(name))
    assert config.loads(config.dumps(cfg)) == cfg


def test_round_trip_keeps_floats_and_kwargs():
    text = SMALL_SAMPLE.replace("[contour]", "[contour]\nedges = 3, 7")
    cfg = config.loads(text)
    assert cfg["model"]["schedule"] == (10.0, 19.0) and cfg["contour"]["edges"] == (3, 7)
    assert config.loads(config.dumps(cfg)) == cfg
    exp = config.loads("[run]\nid = x\nstages = experiment\n[experiment]\n"
                       "name = white_noise\nmodel_name = 'xy'\neps_list = (0.125, 0.0625)\n")
    assert exp["experiment"]["eps_list"] == (0.125, 0.0625)
    assert config.loads(config.dumps(exp)) == exp


@pytest.mark.parametrize("bad, match", [
    ("[run]\nid = a\nstages = sample\n[model]\nmodel = xy\neps = 0.1\nbeta = 1\ncolour = red\n"
     "[sampling]\n", "unknown key"),
    ("[run]\nid = a\nstages = sample\n[plots]\n", "unknown section"),
    ("[run]\nid = a\nstages = sample\n[model]\nmodel = graddelta\neps = 0.1\nbeta = 1\n"
     "delta = 2.0\n[sampling]\n", "delta"),
    ("[run]\nid = a\nstages = sample\n[model]\nmodel = xy\neps = 0.1\nbeta = 1\n"
     "schedule = 10, 19\n[sampling]\n", "exactly one"),
    ("[run]\nid = a\nstages = vortices\n", "needs stage"),
    ("[run]\nid = a\nstages = experiment\n[experiment]\nname = gaussian_oracle\nseed = 3\n",
     "no parameter"),
])
def test_schema_errors(bad, match):
    with pytest.raises(ConfigError, match=match):
        config.loads(bad)


def test_delta_schema_error_exit_code(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[run]\nid = bad\nstages = couple\n[model]\nmodel = graddelta\n"
                   "eps = 0.125\nbeta = 20\ndelta = 2.0\n")
    assert main(["--out-dir", str(tmp_path), "report", str(cfg)]) == 2
    assert main(["sample", "--eps", "0.5"]) == 2  # neither --beta nor --schedule


def test_empty_run_document(tmp_path):
    rec = run_experiment("[run]\nid = empty\nstages =\n", tmp_path)
    doc = emit_report(rec)
    assert doc["stages"] == {} and doc["verdict"] is None
    assert json.loads((tmp_path / "empty" / "report.json").read_text()) == doc


def test_quadratic_oracle_passes(tmp_path):
    rec = run_experiment(bundled_config("quadratic_oracle"), tmp_path)
    assert rec.verdict is True
    doc = emit_report(rec)
    assert doc["verdict"] == "PASS" and doc["stages"]["experiment"]["verdict"] == "PASS"


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    rec = run_experiment(SMALL_SAMPLE, out)
    return rec, emit_report(rec)


def test_pipeline_outputs(pipeline):
    rec, doc = pipeline
    d = rec.run_dir
    with open(d / "samples.csv", newline="") as fh:
        assert next(csv.reader(fh)) == ["chain", "sweep", "vertex_index", "theta"]
    dom, model, _, theta, _ = read_samples(d / "samples.csv")
    assert model.kind == "xy" and dom.n_vertices == 81
    assert theta.shape == (2, 600, 81)
    side = json.loads((d / "samples.json").read_text())
    assert side["domain"]["eps"] == 0.125 and "diagnostics" in side
    with open(d / "fluct_sine.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["t", "re", "im", "se_re", "se_im", "ref"]
    assert float(rows[0]["re"]) == 1.0 and float(rows[0]["ref"]) == 1.0
    assert "table" in json.dumps(doc["stages"]["fluct"])
    fit = doc["stages"]["contour"]["result"]["fit"]
    assert fit is not None and {"slope", "c_fit"} <= set(fit)
    assert (d / "contour.csv").is_file() and (d / "vortices.json").is_file()


def test_seed_replay_is_byte_identical(pipeline, tmp_path):
    rec, _ = pipeline
    again = run_experiment(SMALL_SAMPLE, tmp_path)
    emit_report(again)
    assert again.hashes() == rec.hashes()
    other = run_experiment(SMALL_SAMPLE, tmp_path / "other", seed=6)
    assert other.hashes()["samples.csv"] != rec.hashes()["samples.csv"]


def test_subcommands_chain(tmp_path):
    base = ["--out-dir", str(tmp_path), "--seed", "3"]
    assert main(base + ["sample", "--model", "grad", "--delta", "0.7", "--eps", "0.25",
                        "--beta", "5", "--chains", "2", "--burnin", "50",
                        "--samples", "100"]) == 0
    csv_path = tmp_path / "sample" / "samples.csv"
    assert csv_path.is_file()
    assert main(base + ["vortices", "--in", str(csv_path)]) == 0
    assert main(base + ["contour", "--in", str(csv_path), "--a", "0.1,0.2,0.3"]) == 0
    assert main(["vortices", "--in", str(tmp_path / "missing.csv")]) == 2
    assert main(base + ["walk", "--eps", "0.5", "--pairs", "600", "--envs", "2"]) in (0, 1)
    assert (tmp_path / "walk" / "walk.csv").is_file()


def test_report_listing_and_usage(capsys):
    assert main(["report", "--bundled", "list"]) == 0
    assert "quadratic_oracle" in capsys.readouterr().out
    assert main(["report", "--bundled", "nope"]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["report"]) == 2


def test_runtime_error_exit_code(tmp_path):
    # the anharmonic V'' is unbounded, so the walk has no thinning cap
    cfg = tmp_path / "w.cfg"
    cfg.write_text("[run]\nid = w\nstages = walk\n[walk]\npotential = anharmonic\n"
                   "eps = 0.5\nenvs = 1\nwalkers = 10\n")
    assert main(["--out-dir", str(tmp_path), "report", str(cfg)]) == 3


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "xyfluct.cli", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
