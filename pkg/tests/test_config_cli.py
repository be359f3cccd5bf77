"""Config parsing, validation, artifact formats, and CLI exit codes."""

import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import fkfield.artifacts as art
import fkfield.config as cf
from fkfield.cli import main as cli_main
from fkfield.experiments import OracleReport


def parse_lines(**overrides):
    text = "\n".join(f"{k} = {v}" for k, v in overrides.items())
    return cf.parse_config(text)


def config_error_key(**overrides):
    with pytest.raises(cf.ConfigError) as err:
        parse_lines(**overrides)
    return err.value.key


# ---------------------------------------------------------------------------
# parsing and validation


def test_parse_comments_blanks_and_defaults():
    cfg = cf.parse_config("# a comment\n\nkind = twopoint  # trailing\n")
    assert cfg.kind == "twopoint"
    assert cfg == cf.ExperimentConfig(kind="twopoint")


def test_parse_error_reports_key_and_line():
    with pytest.raises(cf.ConfigError, match="line 2"):
        cf.parse_config("kind = twopoint\nnonsense_key = 3\n")
    with pytest.raises(cf.ConfigError, match="expected key = value"):
        cf.parse_config("just words\n")
    with pytest.raises(cf.ConfigError, match="cannot parse"):
        cf.parse_config("sweeps = many\n")


@pytest.mark.parametrize("overrides,key", [
    (dict(kind="nope"), "kind"),
    (dict(lattice="hex"), "lattice"),
    (dict(n=0), "n"),
    (dict(boundary="open"), "boundary"),
    (dict(model="xy"), "model"),
    (dict(q=0), "q"),
    (dict(p=1.5), "p"),
    (dict(p=0.3, beta=0.5), "beta"),
    (dict(h=-1.0), "h"),
    (dict(h=0.5, q=3), "h"),
    (dict(h=0.5, model="independent-bond", q=2), "h"),
    (dict(chains=0), "chains"),
    (dict(sweeps=0), "sweeps"),
    (dict(thinning=0), "thinning"),
    (dict(method="magic"), "method"),
    (dict(placements=5), "placements"),
    (dict(placements=4, method="two-point-sum"), "placements"),
    (dict(arm_boundary="both"), "arm_boundary"),
    (dict(observable=2), "observable"),
    (dict(cutoff=-0.1), "cutoff"),
    (dict(r1=0.3, r2=0.2), "r1"),
    (dict(a_values="0.25,0.125"), "a_values"),
    (dict(a_values="0.0,0.125"), "a_values"),
    (dict(radii="1,2,x"), "radii"),
    (dict(f_spec="bump:0.5"), "f_spec"),
    (dict(g_spec="wavelet"), "g_spec"),
    (dict(fit_lo=0.2, fit_hi=0.1), "fit_lo"),
    (dict(nx=3), "nx"),
    (dict(kind="oracle", h=0.5), "h"),
    (dict(kind="oracle", n=5), "n"),
])
def test_validation_rejects_and_names_the_key(overrides, key):
    assert config_error_key(**overrides) == key


def test_oracle_bond_cap_allows_small_grids():
    cfg = parse_lines(kind="oracle", nx=2, ny=3, boundary="free")
    assert cf.oracle_graph(cfg).nbonds == 7


def test_resolved_p_sentinels():
    assert cf.resolved_p(parse_lines(p=0.37)) == 0.37
    crit = cf.resolved_p(parse_lines())
    assert crit == pytest.approx(np.sqrt(2) / (1 + np.sqrt(2)), abs=1e-15)
    frombeta = cf.resolved_p(parse_lines(beta=0.5))
    assert frombeta == pytest.approx(1 - np.exp(-1.0), abs=1e-15)


def test_spacing_sentinel():
    assert cf.spacing(parse_lines(n=32)) == pytest.approx(1 / 32)
    assert cf.spacing(parse_lines(n=32, a=0.5)) == 0.5


def test_test_function_specs_build():
    w = __import__("fkfield.lattice", fromlist=["Window"]).Window(2.0, 3.0, 1.0)
    bump = cf.parse_test_function("f_spec", "bump:0.5,0.5,0.1")(w)
    assert bump(np.array([[2.5, 3.5]]))[0] == 1.0  # centered in the window
    ind = cf.parse_test_function("f_spec", "indicator")(w)
    assert ind(np.array([[2.5, 3.5]]))[0] == 1.0


@given(
    n=st.integers(1, 128),
    seed=st.integers(0, 2**31),
    sweeps=st.integers(1, 10**6),
    chains=st.integers(1, 16),
    p=st.one_of(st.just(-1.0), st.floats(0.0, 1.0, allow_nan=False)),
    r1=st.floats(0.01, 0.4, allow_nan=False),
    lam=st.floats(0.1, 10.0, allow_nan=False),
    kind=st.sampled_from(cf.KINDS),
)
@settings(max_examples=80, deadline=None)
def test_serialize_parse_round_trip(n, seed, sweeps, chains, p, r1, lam, kind):
    cfg = cf.ExperimentConfig(n=n, seed=seed, sweeps=sweeps, chains=chains,
                              p=p, r1=r1, r2=2 * r1, lambda_coeff=lam)
    if kind != "oracle":
        cfg.kind = kind  # oracle caps the bond count; keep n free instead
    assert cf.parse_config(cf.serialize_config(cfg)) == cfg


# ---------------------------------------------------------------------------
# artifact formats


@given(st.floats(allow_nan=False, allow_infinity=True, width=64))
@settings(max_examples=200, deadline=None)
def test_format_float_round_trips(x):
    assert float(art.format_float(x)) == x


def test_format_float_nan():
    assert art.format_float(float("nan")) == "nan"


def test_csv_bytes_layout():
    blob = art.csv_bytes(("a", "value"), [(0.5, 1), (0.25, 2)])
    lines = blob.decode("ascii").splitlines()
    assert lines[0] == "a,value"
    assert lines[1] == "0.5,1"
    assert blob.endswith(b"\n")


def test_series_csv_17_digit_floats():
    blob = art.series_csv([1 / 3], [2 / 3], [1e-9], scale_name="x")
    row = blob.decode().splitlines()[1].split(",")
    assert float(row[0]) == 1 / 3 and float(row[1]) == 2 / 3


def test_resolve_outdir_priority(monkeypatch):
    monkeypatch.delenv("FKFIELD_OUT", raising=False)
    assert art.resolve_outdir("cfgdir", None) == "cfgdir"
    assert art.resolve_outdir("cfgdir", "clidir") == "clidir"
    monkeypatch.setenv("FKFIELD_OUT", "envdir")
    assert art.resolve_outdir("cfgdir", None) == "envdir"
    assert art.resolve_outdir("cfgdir", "clidir") == "clidir"
    assert art.resolve_outdir("", None) == "envdir"
    monkeypatch.delenv("FKFIELD_OUT")
    assert art.resolve_outdir("", None) == "out"


# ---------------------------------------------------------------------------
# command-line driver


ORACLE_CFG = """
kind = oracle
nx = 2
ny = 2
boundary = free
p = 0.4
seed = 1
chains = 2
sweeps = 2000
therm = 50
thinning = 1
"""


def run_cli(argv):
    try:
        return cli_main(argv)
    except SystemExit as exc:
        return int(exc.code)


def test_cli_schema_lists_every_key(capsys):
    assert run_cli(["schema"]) == 0
    out = capsys.readouterr().out
    for f in cf.ExperimentConfig.__dataclass_fields__:
        assert f in out


def test_cli_missing_config_file_is_exit_1(tmp_path):
    assert run_cli(["run", str(tmp_path / "absent.cfg")]) == 1


def test_cli_invalid_config_is_exit_1(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("kind = twopoint\nq = 0\n")
    assert run_cli(["run", str(path)]) == 1
    assert "config key 'q'" in capsys.readouterr().err


def test_cli_oracle_needs_oracle_kind(tmp_path):
    path = tmp_path / "t.cfg"
    path.write_text("kind = twopoint\n")
    assert run_cli(["oracle", str(path)]) == 1


def test_cli_oracle_run_passes_and_reports(tmp_path, capsys):
    path = tmp_path / "oracle.cfg"
    path.write_text(ORACLE_CFG)
    assert run_cli(["oracle", str(path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] is True
    assert report["graph"] == "2x2"
    assert set(report["observables"]) >= {"connectivity", "sum_sq_sizes",
                                          "cluster_count", "loop_count"}


def test_cli_oracle_failure_is_exit_3(tmp_path, monkeypatch, capsys):
    import fkfield.experiments as expm
    path = tmp_path / "oracle.cfg"
    path.write_text(ORACLE_CFG)
    fake = OracleReport(graph_shape="2x2", p=0.4, q=2, snapshots=10,
                        observables={}, passed=False)
    monkeypatch.setattr(expm, "verify_against_oracle", lambda *a, **k: fake)
    assert run_cli(["oracle", str(path)]) == 3


def test_cli_run_writes_manifest_with_digests(tmp_path, capsys):
    path = tmp_path / "oracle.cfg"
    path.write_text(ORACLE_CFG)
    outdir = tmp_path / "res"
    assert run_cli(["run", str(path), "--out", str(outdir)]) == 0
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert manifest["seed"] == 1
    assert manifest["chain_streams"] == [[1, 0], [1, 1]]
    for name, digest in manifest["files"].items():
        data = (outdir / name).read_bytes()
        assert art.sha256_hex(data) == digest


def test_cli_run_seed_override_and_determinism(tmp_path, capsys):
    path = tmp_path / "oracle.cfg"
    path.write_text(ORACLE_CFG)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert run_cli(["run", str(path), "--out", str(out1), "--seed", "7"]) == 0
    assert run_cli(["run", str(path), "--out", str(out2), "--seed", "7"]) == 0
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m1["seed"] == 7
    assert m1["files"] == m2["files"]  # identical content digests
    for name in m1["files"]:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_cli_run_env_var_outdir(tmp_path, monkeypatch, capsys):
    path = tmp_path / "oracle.cfg"
    path.write_text(ORACLE_CFG)
    envdir = tmp_path / "fromenv"
    monkeypatch.setenv("FKFIELD_OUT", str(envdir))
    assert run_cli(["run", str(path)]) == 0
    assert (envdir / "manifest.json").exists()
