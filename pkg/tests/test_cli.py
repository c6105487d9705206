import json
import re

import pytest

from sdpp import cli
from sdpp.evaluation import TABLE_COLUMNS, GroundTruthMap
from sdpp.generation import load_enhanced, load_specs, validate_map
from sdpp.osm import load_segments, parse_osm

TIMESTAMP = re.compile(r'^\s*"created_at": .*\n', re.MULTILINE)


def strip_time(text: str) -> str:
    return TIMESTAMP.sub("", text)


def run(*argv) -> int:
    return cli.main([str(a) for a in argv])


@pytest.fixture(autouse=True)
def _no_epoch(monkeypatch):
    # real clock, so timestamp exclusion is exercised
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)


def test_run_writes_artifacts_matching_golden(tmp_path, mini_map_path, golden_path):
    assert run("run", "--backend", "deterministic", "--variant", "osg", mini_map_path, tmp_path / "out") == 0
    out = tmp_path / "out"
    assert sorted(p.name for p in out.iterdir()) == sorted(cli.ARTIFACTS)
    assert strip_time((out / "enhanced.json").read_text()) == strip_time(golden_path.read_text())

    # every artifact re-parses with its owner's loader
    parse_osm((out / "filtered.osm.xml").read_bytes())
    load_segments((out / "segments.json").read_text())
    specs, header = load_specs((out / "specs.json").read_text())
    assert sorted(specs) == [101, 102] and header["failures"] == []
    m = load_enhanced((out / "enhanced.json").read_text())
    assert validate_map(m).valid_pct == 100.0
    gj = json.loads((out / "enhanced.geojson").read_text())
    assert gj["type"] == "FeatureCollection"


def test_stage_composition(tmp_path, mini_map_path, manual_text):
    manual = tmp_path / "manual.txt"
    manual.write_text(manual_text)
    opts = ["--variant", "ig-context", "--manual", manual, "--jobs", "3"]
    assert run("run", *opts, mini_map_path, tmp_path / "all") == 0
    s = tmp_path / "staged"
    assert run("filter", mini_map_path, s / "filtered.osm.xml") == 0
    assert run("normalize", s / "filtered.osm.xml", s / "segments.json") == 0
    assert run("extract", *opts, s / "segments.json", s / "specs.json") == 0
    assert run("generate", "--jobs", "3", s / "segments.json", s / "specs.json", s / "enhanced.json") == 0
    assert run("export", s / "enhanced.json", s / "enhanced.geojson") == 0
    for name in cli.ARTIFACTS:
        a = (tmp_path / "all" / name).read_text()
        b = (s / name).read_text()
        assert strip_time(a) == strip_time(b), name


def test_eval_self_derived(tmp_path, golden_path, capsys):
    gt = tmp_path / "gt.json"
    assert run("export", "--format", "gt", golden_path, gt) == 0
    capsys.readouterr()
    assert run("eval", golden_path, gt, "--json", tmp_path / "report.json") == 0
    table = capsys.readouterr().out.splitlines()
    assert [c.strip() for c in table[0].split(" | ")] == list(TABLE_COLUMNS)
    assert table[2].split(" | ")[-1].strip() == "1.00"
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["recall"] == 1.0 and report["chamfer_avg"] <= 1e-9


def test_eval_threshold_flag(tmp_path, golden_path, capsys):
    gt = tmp_path / "gt.json"
    run("export", "--format", "gt", golden_path, gt)
    # push every ground-truth lane about 20 m sideways: way 101 runs east, way 102 north
    data = GroundTruthMap.from_json(gt.read_text())
    shift = {101: (1.8e-4, 0.0), 102: (0.0, 2.27e-4)}
    moved = GroundTruthMap({w: [tuple((a + shift[w][0], b + shift[w][1]) for a, b in ln) for ln in lanes]
                            for w, lanes in data.entries.items()})
    gt.write_text(moved.to_json())
    capsys.readouterr()
    assert run("eval", golden_path, gt, "--threshold", "30") == 0
    assert capsys.readouterr().out.splitlines()[2].split(" | ")[-1].strip() == "1.00"
    assert run("eval", golden_path, gt) == 0
    assert capsys.readouterr().out.splitlines()[2].split(" | ")[-1].strip() == "0.00"


def test_unknown_variant_is_usage_error(tmp_path, mini_map_path):
    with pytest.raises(SystemExit) as info:
        run("run", "--variant", "two-shot", mini_map_path, tmp_path)
    assert info.value.code == 2


def test_missing_rules(tmp_path, mini_map_path, capsys):
    assert run("run", "--rules", tmp_path / "absent.json", mini_map_path, tmp_path / "o") == 2
    assert "absent.json" in capsys.readouterr().err


def test_remote_without_manual(tmp_path, mini_map_path, capsys):
    assert run("run", "--backend", "remote", "--base-url", "http://x", "--model", "m",
               mini_map_path, tmp_path / "o") == 2
    assert "--manual" in capsys.readouterr().err


def test_unknown_template(tmp_path, mini_map_path):
    assert run("run", "--template", "P7", mini_map_path, tmp_path / "o") == 2


def test_malformed_osm_is_runtime_error(tmp_path, capsys):
    bad = tmp_path / "bad.osm"
    bad.write_bytes(b"<osm><node id='1'")
    assert run("filter", bad, tmp_path / "f.xml") == 1
    assert "byte offset" in capsys.readouterr().err


def test_toml_config_and_flag_precedence(tmp_path, mini_map_path):
    cfg = tmp_path / "sdpp.toml"
    cfg.write_text('[sdpp]\nvariant = "ig"\ndrive-side = "left"\nthreshold = 3.0\n')
    args = cli.build_parser().parse_args(["run", "--config", str(cfg), "--variant", "osg", "a", "b"])
    resolved = cli.resolve_config(args)
    assert (resolved.variant, resolved.drive_side, resolved.threshold) == ("osg", "left", 3.0)

    assert run("run", "--config", cfg, mini_map_path, tmp_path / "o") == 0
    m = load_enhanced((tmp_path / "o" / "enhanced.json").read_text())
    assert m.variant == "IG" and m.generation_metadata["drive_side"] == "left"


def test_bad_config_values(tmp_path, mini_map_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("colour = 'blue'\n")
    assert run("run", "--config", cfg, mini_map_path, tmp_path / "o") == 2
    cfg.write_text("threshold = -1.0\n")
    assert run("run", "--config", cfg, mini_map_path, tmp_path / "o") == 2


def test_explicit_origin(tmp_path, mini_map_path):
    assert run("run", "--origin", "37.0,-122.0", mini_map_path, tmp_path / "o") == 0
    m = load_enhanced((tmp_path / "o" / "enhanced.json").read_text())
    assert m.generation_metadata["frame"] == {"origin_lat": 37.0, "origin_lon": -122.0}
    assert run("run", "--origin", "north", mini_map_path, tmp_path / "p") == 2


def test_module_entry_point():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "sdpp", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("filter", "normalize", "extract", "generate", "eval", "export", "run"):
        assert cmd in out.stdout


def test_boundary_option(tmp_path, mini_map_path):
    assert run("run", "--boundary", "lanes", mini_map_path, tmp_path / "o") == 0
    m = load_enhanced((tmp_path / "o" / "enhanced.json").read_text())
    assert m.generation_metadata["boundary"] == "lanes"
    cfg = tmp_path / "c.toml"
    cfg.write_text('boundary = "kerb"\n')
    assert run("run", "--config", cfg, mini_map_path, tmp_path / "p") == 2
