import csv
import json

import pytest
from hypothesis import given, settings, strategies as st

from rismp.cli import CDF_COLUMNS, RECORD_COLUMNS, main, read_records, read_summary
from rismp.config import ConfigError, ScenarioConfig, config_hash, parse_config, parse_config_text, serialize


def write(tmp_path, text, name="scenario.txt"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# -- configuration ---------------------------------------------------------------------------


def test_empty_config_is_default_scenario():
    c = parse_config_text("")
    assert c == ScenarioConfig()
    assert c.n_bs == 3 and c.n_ue == 3
    assert (c.ris.kx, c.ris.ky) == (10, 10)
    assert c.radio.fc_ghz == 2.6 and c.radio.bandwidth_mhz == 100.0
    assert c.radio.ptot_dbm == 23.0 and c.block_s == 0.05


def test_packet_bytes_to_bits():
    c = parse_config_text("traffic.t1.packet_bytes = 10000\n")
    assert c.traffic_types()[0].packet_bits == 80_000


def test_round_trip_default():
    c = ScenarioConfig()
    assert parse_config_text(serialize(c)) == c


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 10**6), st.integers(0, 2**64 - 1), st.floats(0.1, 40.0), st.integers(1, 16),
    st.one_of(st.none(), st.floats(-10.0, 20.0)), st.floats(0.0, 10.0),
    st.lists(st.sampled_from(("mp_ris", "mp", "ps", "sp")), min_size=1, max_size=4, unique=True),
)
def test_round_trip_property(blocks, seed, nf, L, gain, speed, schemes):
    c = parse_config_text("", [
        f"sim.blocks={blocks}", f"sim.seed={seed}", f"radio.noise_figure_db={nf!r}", f"bs.antennas={L}",
        f"ris.element_gain_db={'none' if gain is None else repr(gain)}", f"sim.ue_speed={speed!r}",
        f"sim.schemes={','.join(schemes)}",
    ])
    again = parse_config_text(serialize(c))
    assert again == c
    assert config_hash(again) == config_hash(c)


def test_comments_and_blank_lines(tmp_path):
    p = write(tmp_path, "# scenario\n\nsim.blocks = 7  # short run\n")
    assert parse_config(p).sim.blocks == 7


def test_parse_error_reports_line():
    with pytest.raises(ConfigError, match="line 2") as exc:
        parse_config_text("sim.blocks = 3\nthis is not a pair\n")
    assert exc.value.line == 2


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key") as exc:
        parse_config_text("sim.blocks = 3\nris.colour = 4\n")
    assert exc.value.key == "ris.colour" and exc.value.line == 2


def test_bad_value_names_key():
    with pytest.raises(ConfigError, match="sim.blocks"):
        parse_config_text("sim.blocks = many\n")


def test_validation_message():
    with pytest.raises(ConfigError, match="ris.kx must be ≥ 1") as exc:
        parse_config_text("ris.kx = 0\n")
    assert exc.value.key == "ris.kx"


@pytest.mark.parametrize("line, key", [
    ("sim.blocks = 0", "sim.blocks"),
    ("sim.block_ms = 0", "sim.block_ms"),
    ("bs.antennas = 0", "bs.antennas"),
    ("ris.bs_link_scale = -1", "ris.bs_link_scale"),
])
def test_validation_names_offending_key(line, key):
    with pytest.raises(ConfigError) as exc:
        parse_config_text(line)
    assert exc.value.key == key
    assert key in str(exc.value)


def test_hash_stable_and_sensitive():
    a = config_hash(ScenarioConfig())
    assert a == config_hash(parse_config_text(""))
    assert len(a) == 64
    assert a != config_hash(parse_config_text("sim.seed = 1"))


# -- command line ------------------------------------------------------------------------------


def run_cli(tmp_path, name, *extra):
    cfg = write(tmp_path, "sim.blocks = 2\n")
    out = tmp_path / name
    code = main(["run", str(cfg), "--out", str(out), *extra])
    return code, out


def test_validate_command(tmp_path, capsys):
    assert main(["validate", str(write(tmp_path, ""))]) == 0
    assert capsys.readouterr().out.strip() == f"ok {config_hash(ScenarioConfig())}"
    assert main(["validate", str(write(tmp_path, "ris.kx = 0\n", "bad.txt"))]) == 1
    assert "ris.kx must be ≥ 1" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.txt")]) == 1


def test_usage_error_exit_code(tmp_path):
    assert main(["run", str(write(tmp_path, ""))]) == 1  # --out missing


def test_run_outputs(tmp_path, capsys):
    code, out = run_cli(tmp_path, "a")
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["config_hash"] == config_hash(parse_config_text("sim.blocks = 2"))
    assert manifest["seed"] == 2026 and manifest["sp_home_bs"] == [1, 2, 3]
    assert manifest["started"] and manifest["finished"] and manifest["version"]

    with (out / "records.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == RECORD_COLUMNS
    assert len(rows) - 1 == 2 * 4 * 3 * 2
    recs = read_records(out / "records.csv")
    assert {r.scheme for r in recs} == {"mp_ris", "mp", "ps", "sp"}

    tables = read_summary(out / "summary.csv")
    assert tables[0][0] == ["traffic", "mp_ris", "mp", "ps", "sp"]
    assert len(tables[0]) == 1 + 2  # two traffic rows
    assert all(len(v.split(".")[1]) == 3 for row in tables[0][1:] for v in row[1:])
    assert tables[1][0] == ["ue", "traffic", "mp_ris", "mp", "ps", "sp"] and len(tables[1]) == 1 + 6
    assert tables[2][0] == ["scheme", "u_bar_ms", "violations", "nonfinite_blocks"]

    cdfs = sorted(p.name for p in (out / "cdf").iterdir())
    assert len(cdfs) == 4 * 3 * 2 and "mp_ris_ue1_t1.csv" in cdfs
    with (out / "cdf" / "sp_ue2_t1.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CDF_COLUMNS
    probs = [float(p) for _, p in rows[1:]]
    assert probs == sorted(probs) and probs[-1] == 1.0
    assert "traffic,mp_ris,mp,ps,sp" in capsys.readouterr().out


def test_run_row_count_with_overrides(tmp_path):
    cfg = write(tmp_path, "")
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--out", str(out), "--override", "sim.blocks=3", "--schemes", "sp,ps"]) == 0
    assert len(read_records(out / "records.csv")) == 3 * 2 * 3 * 2


def test_rerun_identical_except_timestamps(tmp_path):
    _, a = run_cli(tmp_path, "a")
    _, b = run_cli(tmp_path, "b", "--workers", "2")
    for name in ("records.csv", "summary.csv", "config.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    for p in (a / "cdf").iterdir():
        assert p.read_bytes() == (b / "cdf" / p.name).read_bytes()
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    for m in (ma, mb):
        del m["started"], m["finished"]
    assert ma == mb


def test_run_invalid_override(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "x", "--override", "sim.blocks=0")
    assert code == 1
    assert "sim.blocks must be ≥ 1" in capsys.readouterr().err


def test_run_runtime_error_marks_manifest(tmp_path, monkeypatch):
    import rismp.cli as cli

    def boom(*args, **kwargs):
        raise FloatingPointError("broken")

    monkeypatch.setattr(cli, "run_scenario", boom)
    code, out = run_cli(tmp_path, "f")
    assert code == 2
    assert json.loads((out / "manifest.json").read_text())["status"] == "failed"


def test_cdf_command(tmp_path, capsys):
    _, out = run_cli(tmp_path, "a")
    capsys.readouterr()
    assert main(["cdf", str(out / "records.csv"), "--scheme", "mp", "--ue", "1", "--traffic", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "latency_s,cdf" and lines[-1].endswith(",1.0")
    target = tmp_path / "c.csv"
    assert main(["cdf", str(out / "records.csv"), "--scheme", "mp", "--ue", "1", "--traffic", "2",
                 "--out", str(target)]) == 0
    assert target.read_text().splitlines() == lines
    assert main(["cdf", str(out / "records.csv"), "--scheme", "mp", "--ue", "9", "--traffic", "1"]) == 1
    assert "no matching records" in capsys.readouterr().err
