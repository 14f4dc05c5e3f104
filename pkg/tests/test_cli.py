"""Command-line contract: configs, run directories, resume, determinism.

These drive ``main()`` in-process with tmp_path sandboxes -- same code path
as the installed console script but without subprocess overhead.
"""

import os

import numpy as np
import pytest

from displab.cli import (
    SIZE_GUARD,
    ConfigError,
    build_model,
    canonical_config,
    config_sha,
    fmt,
    load_config_text,
    main,
    read_csv_rows,
    write_csv,
)

BAND_TMPL = """\
[run]
kind = band
seed = 1
{extra}
[model]
d = 1
n = 1
m = 8
lam = 0.1

[periodic]
family = cosine
coefficients = -1.0

[site]
family = asym-bump

[band]
zeta = -1.0
nbands = 2
theta_n = 1
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# -- pure helpers -----------------------------------------------------------


def test_fmt_round_trip():
    assert fmt(True) == "true" and fmt(False) == "false"
    assert fmt(3) == "3"
    assert fmt(np.int64(-7)) == "-7"
    assert fmt(0.1) == "0.1"
    assert float(fmt(1.0 / 3.0)) == 1.0 / 3.0  # shortest repr round-trips
    assert fmt("label") == "label"


def test_write_csv_deterministic(tmp_path):
    path = str(tmp_path / "t.csv")
    rows = [[1, 0.5, "a,b"], [2, 1.0 / 3.0, "plain"]]
    write_csv(path, ["i", "x", "s"], rows)
    first = open(path, "rb").read()
    write_csv(path, ["i", "x", "s"], rows)
    assert open(path, "rb").read() == first
    assert b'"a,b"' in first  # RFC-style quoting only where needed
    assert b"\r" not in first
    header, parsed = read_csv_rows(path)
    assert header == ["i", "x", "s"]
    assert parsed[0][2] == "a,b"
    assert float(parsed[1][1]) == 1.0 / 3.0
    assert not os.path.exists(path + ".tmp"), "temp file must be renamed away"


def test_config_parses_and_validates():
    cfg = load_config_text(BAND_TMPL.format(extra=""))
    assert cfg["run"]["kind"] == "band"
    with pytest.raises(ConfigError):
        load_config_text("not an ini file [[[")
    with pytest.raises(ConfigError):
        load_config_text("[model]\nd = 1\n")  # no [run]
    with pytest.raises(ConfigError):
        load_config_text("[run]\nkind = frobnicate\n")


def test_canonical_config_excludes_run_out_and_threads():
    base = load_config_text(BAND_TMPL.format(extra=""))
    b = load_config_text(BAND_TMPL.format(extra="out = /somewhere/else\nthreads = 9\n"))
    assert canonical_config(base) == canonical_config(b)
    assert config_sha(base) == config_sha(b)
    c = load_config_text(BAND_TMPL.format(extra="seed = 2\n").replace("seed = 1\n", ""))
    assert config_sha(base) != config_sha(c)


def test_canonical_config_is_order_insensitive():
    cfg = load_config_text(BAND_TMPL.format(extra=""))
    shuffled = load_config_text(
        "[site]\nfamily = asym-bump\n\n[band]\ntheta_n = 1\nnbands = 2\nzeta = -1.0\n\n"
        "[periodic]\ncoefficients = -1.0\nfamily = cosine\n\n"
        "[model]\nlam = 0.1\nm = 8\nn = 1\nd = 1\n\n[run]\nseed = 1\nkind = band\n"
    )
    assert config_sha(cfg) == config_sha(shuffled)


def test_build_model_errors():
    cfg = load_config_text(BAND_TMPL.format(extra=""))
    cfg["model"]["m"] = "not-a-number"
    with pytest.raises(ConfigError):
        build_model(cfg)
    cfg = load_config_text(BAND_TMPL.format(extra=""))
    del cfg["model"]["d"]
    with pytest.raises(ConfigError):
        build_model(cfg)


def test_size_guard_rejects_huge_grids():
    cfg = load_config_text(BAND_TMPL.format(extra=""))
    cfg["model"]["n"] = "50000"
    cfg["model"]["m"] = "4"
    with pytest.raises(ConfigError, match="size guard"):
        build_model(cfg)
    assert SIZE_GUARD == 200_000


# -- end-to-end over main() ---------------------------------------------------


def test_band_run_end_to_end(tmp_path):
    cfg_path = _write(tmp_path, "band.ini", BAND_TMPL.format(extra=""))
    out = str(tmp_path / "run")
    assert main(["band", "--config", cfg_path, "--out", out]) == 0
    names = sorted(os.listdir(out))
    assert names == ["bands.csv", "manifest.txt", "summary.txt"]
    header, rows = read_csv_rows(os.path.join(out, "bands.csv"))
    assert header == ["theta_1", "e_1", "e_2"]
    assert len(rows) == 3  # theta_n = 1 -> three momenta
    summary = open(os.path.join(out, "summary.txt")).read()
    assert summary.rstrip().endswith("status: complete")
    manifest = open(os.path.join(out, "manifest.txt")).read()
    assert "config_sha256 = " in manifest
    assert "--- config ---" in manifest


def test_missing_config_is_usage_error(tmp_path):
    assert main(["band"]) == 2
    assert main(["band", "--config", str(tmp_path / "absent.ini")]) == 2


def test_kind_subcommand_mismatch(tmp_path):
    cfg_path = _write(tmp_path, "band.ini", BAND_TMPL.format(extra=""))
    assert main(["minimize", "--config", cfg_path, "--out", str(tmp_path / "x")]) == 2


def test_no_out_dir_is_error(tmp_path):
    cfg_path = _write(tmp_path, "band.ini", BAND_TMPL.format(extra=""))
    assert main(["band", "--config", cfg_path]) == 2
    cfg_path2 = _write(tmp_path, "band2.ini", BAND_TMPL.format(extra="out = sub\n"))
    cwd = os.getcwd()
    os.chdir(tmp_path)
    try:
        assert main(["band", "--config", cfg_path2]) == 0
        assert os.path.exists(tmp_path / "sub" / "summary.txt")
    finally:
        os.chdir(cwd)


def test_rerun_same_config_is_byte_identical(tmp_path):
    cfg_path = _write(tmp_path, "band.ini", BAND_TMPL.format(extra=""))
    out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["band", "--config", cfg_path, "--out", out_a]) == 0
    assert main(["band", "--config", cfg_path, "--out", out_b]) == 0
    for name in ("bands.csv", "summary.txt"):
        assert open(os.path.join(out_a, name), "rb").read() == open(
            os.path.join(out_b, name), "rb"
        ).read()


def test_refuses_overwrite_of_other_run(tmp_path):
    cfg_path = _write(tmp_path, "band.ini", BAND_TMPL.format(extra=""))
    out = str(tmp_path / "run")
    assert main(["band", "--config", cfg_path, "--out", out]) == 0
    other = _write(tmp_path, "band2.ini", BAND_TMPL.format(extra="").replace("seed = 1", "seed = 2"))
    assert main(["band", "--config", other, "--out", out]) == 2


def test_seed_flag_overrides_config(tmp_path):
    cfg_path = _write(tmp_path, "band.ini", BAND_TMPL.format(extra=""))
    out = str(tmp_path / "run")
    assert main(["band", "--config", cfg_path, "--out", out, "--seed", "5"]) == 0
    manifest = open(os.path.join(out, "manifest.txt")).read()
    assert "seed = 5" in manifest


IDS_TMPL = """\
[run]
kind = ids
seed = 3

[model]
d = 1
n = 1
m = 8
lam = 0.1

[periodic]
family = cosine
coefficients = -1.0

[site]
family = asym-bump

[support]
kind = ball
radius = 1.0

[distribution]
kind = uniform-ball

[ids]
zeta = -1.0
c0 = 8.0
alpha = 0.0015
n_samples = 6
n_offsets = 4
"""


def test_ids_resume_equals_one_shot(tmp_path):
    cfg_path = _write(tmp_path, "ids.ini", IDS_TMPL)
    full, partial = str(tmp_path / "full"), str(tmp_path / "partial")
    assert main(["ids", "--config", cfg_path, "--out", full]) == 0
    assert main(["ids", "--config", cfg_path, "--out", partial]) == 0
    # truncate the sample cache to simulate an interrupted run, drop summary
    cache = os.path.join(partial, "cache.csv")
    lines = open(cache).read().splitlines(keepends=True)
    open(cache, "w").write("".join(lines[:3]))
    os.remove(os.path.join(partial, "summary.txt"))
    assert main(["ids", "--resume", partial]) == 0
    for name in ("cache.csv", "curves.csv", "summary.txt"):
        assert open(os.path.join(full, name), "rb").read() == open(
            os.path.join(partial, name), "rb"
        ).read(), name


def test_resume_of_complete_run_is_a_noop(tmp_path, capsys):
    cfg_path = _write(tmp_path, "ids.ini", IDS_TMPL)
    out = str(tmp_path / "run")
    assert main(["ids", "--config", cfg_path, "--out", out]) == 0
    before = open(os.path.join(out, "summary.txt"), "rb").read()
    assert main(["ids", "--resume", out]) == 0
    assert "already complete" in capsys.readouterr().out
    assert open(os.path.join(out, "summary.txt"), "rb").read() == before


def test_resume_validations(tmp_path):
    cfg_path = _write(tmp_path, "ids.ini", IDS_TMPL)
    assert main(["ids", "--resume", str(tmp_path / "nowhere")]) == 2
    out = str(tmp_path / "run")
    assert main(["ids", "--config", cfg_path, "--out", out]) == 0
    # matching --config alongside --resume is allowed
    assert main(["ids", "--resume", out, "--config", cfg_path]) == 0
    # a disagreeing --config is refused
    other = _write(tmp_path, "ids2.ini", IDS_TMPL.replace("seed = 3", "seed = 4"))
    assert main(["ids", "--resume", out, "--config", other]) == 2


@pytest.mark.parametrize(
    "preset",
    ["asym-1d", "minimize-1d", "reduce-1d", "sandwich-1d", "theorem1-1d"],
)
def test_shipped_presets_run_clean(tmp_path, preset):
    """Every committed preset must run to a complete summary as shipped.

    The Monte-Carlo presets (ids / lifshitz / wegner / free) are exercised by
    the acceptance gate; these are the remaining verification-style ones.
    """
    from importlib.resources import files

    cfg = str(files("displab") / "presets" / f"{preset}.ini")
    kind = None
    for line in open(cfg, encoding="utf-8"):
        if line.strip().startswith("kind"):
            kind = line.split("=")[1].strip()
            break
    out = str(tmp_path / preset)
    assert main([kind, "--config", cfg, "--out", out]) == 0
    summary = open(os.path.join(out, "summary.txt"), encoding="utf-8").read()
    assert summary.rstrip().endswith("status: complete")
