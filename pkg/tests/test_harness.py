import csv
import json
import math
from pathlib import Path

import pytest
from click.testing import CliRunner
from pydantic import ValidationError

from shrinklab.cli import main
from shrinklab.config import ExperimentConfig, default_config, load_config, parse_config
from shrinklab.reports import emit_report
from shrinklab.runner import run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_round_trip(path):
    cfg = load_config(path)
    again = ExperimentConfig(**cfg.to_dict())
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()


@pytest.mark.parametrize("kind", ["shrink", "recur", "cantor", "markov", "mixing", "converge-demo"])
def test_defaults_validate(kind):
    assert default_config(kind).kind == kind


def test_radius_above_pi_rejected():
    text = """
kind = "shrink"
[shrink]
radii = { kind = "constant", scale = "2" }
"""
    with pytest.raises(ValidationError):
        parse_config(text)
    with pytest.raises(ValidationError):
        parse_config('kind = "shrink"\n[shrink]\nradii = { kind = "constant", value = 6.2832 }\n')


@pytest.mark.parametrize("text", [
    'kind = "shrink"\nsamples = 4\nbogus = 1\n',
    'kind = "shrink"\n[shrink]\neps = 0.1\ncolour = "red"\n',
    'kind = "markov"\n[shrink]\n',
    'kind = "mixing"\n[mixing]\nresolution = 100\n',
    'kind = "nonsense"\n',
    'kind = "recur"\n[sequence]\nkind = "power"\nbases = [1]\n',
])
def test_invalid_configs_rejected(text):
    with pytest.raises(ValidationError):
        parse_config(text)


def _small_shrink(out, **kw):
    cfg = parse_config(f"""
kind = "shrink"
seed = 7
samples = 6
out = "{out}"
[shrink]
checkpoints = [256, 1024, 4096]
""")
    return cfg.with_overrides(**kw)


def _payload(d: Path):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "timings.json"}


def test_identical_config_gives_identical_bytes(tmp_path):
    cfg = _small_shrink(tmp_path / "a")
    emit_report(run(cfg), tmp_path / "a")
    first = _payload(tmp_path / "a")
    emit_report(run(cfg), tmp_path / "a")
    assert _payload(tmp_path / "a") == first
    assert set(first) == {"shrink.csv", "record.json", "count_vs_phi.svg"}


def test_shrink_csv_schema(tmp_path):
    rec = run(_small_shrink(tmp_path))
    emit_report(rec, tmp_path)
    rows = list(csv.reader((tmp_path / "shrink.csv").open()))
    assert rows[0] == ["sample_id", "N", "count", "phi", "deviation"]
    assert len(rows) == 1 + 6 * 3
    payload = json.loads((tmp_path / "record.json").read_text())
    assert payload["config"] == rec.config
    assert ExperimentConfig(**payload["config"]) == _small_shrink(tmp_path)
    assert "total_seconds" in json.loads((tmp_path / "timings.json").read_text())


def test_empty_ensemble_writes_header_only(tmp_path):
    # a 64-bit budget cannot reach step 4096, so every sample fails
    rec = run(_small_shrink(tmp_path, precision_bits=64))
    emit_report(rec, tmp_path)
    assert (tmp_path / "shrink.csv").read_text() == "sample_id,N,count,phi,deviation\n"
    assert not rec.passed
    assert rec.verdicts["no_failures"]["failed"] == 6


def test_markov_cylinders_sorted(tmp_path):
    cfg = parse_config('kind = "markov"\n[markov]\nmax_level = 6\n')
    rec = run(cfg)
    emit_report(rec, tmp_path)
    rows = list(csv.DictReader((tmp_path / "cylinders.csv").open()))
    assert list(rows[0]) == ["level", "itinerary", "start", "length", "K", "sup_deriv"]
    keys = [(int(r["level"]), float(r["start"])) for r in rows]
    assert keys == sorted(keys)
    assert len(rows) == sum(2 ** k for k in range(1, 7))
    cert = json.loads((tmp_path / "record.json").read_text())["extra"]["certificate"]
    assert cert["verdict"] in ("PASS", "FAIL")


def test_cli_exit_codes(tmp_path):
    runner = CliRunner()
    ok = runner.invoke(main, ["markov", "--out", str(tmp_path / "m")])
    assert ok.exit_code == 0, ok.output
    assert "PASS  certificate" in ok.output
    bad_cfg = tmp_path / "bad.toml"
    bad_cfg.write_text('kind = "markov"\nunknown = 3\n')
    bad = runner.invoke(main, ["markov", "--config", str(bad_cfg)])
    assert bad.exit_code == 2
    wrong = runner.invoke(main, ["shrink", "--config", str(CONFIGS / "markov.toml")])
    assert wrong.exit_code == 2
    fail = runner.invoke(main, ["shrink", "--samples", "2", "--precision-bits", "64",
                                "--out", str(tmp_path / "s")])
    assert fail.exit_code == 1


def test_cli_cantor_expand():
    res = CliRunner().invoke(main, ["cantor", "expand", "5/6", "--bases", "2,3", "--digits", "4"])
    assert res.exit_code == 0
    assert res.output.strip() == "1 2 0 0"
