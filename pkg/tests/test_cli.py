import numpy as np
import pytest

from cornerweights.cli import main, parse_config_text
from cornerweights.errors import ConfigError

SMALL = "grid.n_t = 161\ngrid.n_x = 201\ngrid.n_xi = 161\n"


def _cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(path):
    return [l for l in path.read_text().splitlines() if not l.startswith("#")]


def test_eigen_table(tmp_path):
    assert main(["eigen", "--out", str(tmp_path)]) == 0
    body = (tmp_path / "eigen.csv").read_text()
    lams = [float(l.split(",")[1]) for l in _rows(tmp_path / "eigen.csv")[1:]]
    for v in (-4.5, -1.5, 1.5, 4.5):
        assert min(abs(x - v) for x in lams) < 1e-9
    assert body.startswith("# ")
    assert "excluded" in (tmp_path / "weights.csv").read_text()


def test_constant_solve(tmp_path):
    cfg = _cfg(tmp_path, SMALL + "data.id = constant\ndata.value = 2.5\nweights.beta = 1\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = _rows(tmp_path / "o" / "solution.csv")[1:]
    u = np.array([float(r.split(",")[2]) for r in rows])
    assert np.max(np.abs(u - 2.5)) < 1e-10


def test_manufactured_dirichlet_solve(tmp_path):
    cfg = _cfg(tmp_path, SMALL + "problem.kind = DVP\neta.params = 0, 1\ngamma = 1\n"
                                 "data.id = manufactured\nweights.beta = 1\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    err = _rows(tmp_path / "o" / "errors.csv")[1]
    assert float(err.split(",")[1]) <= 1e-5


def test_incompatible_neumann_exits_with_precondition(tmp_path):
    out = tmp_path / "o"
    cfg = _cfg(tmp_path, "problem.kind = NVP\neta.params = 0, 1\ngamma = 1\ndata.id = incompatible\n"
                         "weights.beta = 1\n")
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 3
    assert not out.exists()


@pytest.mark.parametrize("text", ["no equals sign\n", "bogus.key = 1\n", "seed = 1\nseed = 2\n",
                                  "grid.n_t = many\n", "weights.l = 1\n"])
def test_bad_config_exits_with_parse_error(tmp_path, text):
    assert main(["eigen", "--config", _cfg(tmp_path, text), "--out", str(tmp_path / "o")]) == 2


def test_parse_errors_name_the_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("seed = 1\noops\n")


def test_zero_family_verify(tmp_path):
    cfg = _cfg(tmp_path, SMALL + "family.kind = zero\nfamily.size = 3\nweights.beta = 1\n")
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    text = (tmp_path / "o" / "report.csv").read_text()
    assert "# family.kind = zero" in text
    assert "true" in _rows(tmp_path / "o" / "report.csv")[-1]


def test_verify_is_bit_identical(tmp_path):
    cfg = _cfg(tmp_path, SMALL + "weights.l = 3\nweights.beta = 1\n")
    assert main(["verify", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "a")]) == 0
    assert main(["verify", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()


def test_dn_command(tmp_path):
    cfg = _cfg(tmp_path, "grid.n_xi = 321\n")
    assert main(["dn", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    header = _rows(tmp_path / "o" / "dn.csv")[0].split(",")
    errs = np.array([float(r.split(",")[header.index("error")]) for r in _rows(tmp_path / "o" / "dn.csv")[1:]])
    assert np.max(np.abs(errs)) < 1e-4
