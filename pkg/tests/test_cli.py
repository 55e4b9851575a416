import json

from gmpy2 import mpfr
import pytest

from sturmdim import __version__, bandtree, cli, frequency
from sturmdim.errors import BoundViolated


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_spectrum_summary(capsys):
    code, out, err = run(capsys, "spectrum", "--cf", "periodic:1", "--depth", "3")
    assert code == 0
    assert "level sizes: 2, 2, 4, 6" in err
    lines = [l for l in out.splitlines() if not l.startswith("#")]
    assert lines[0] == ",".join(bandtree.CSV_COLUMNS) and len(lines) == 7


def test_spectrum_json_roots(capsys):
    code, out, _ = run(capsys, "spectrum", "--cf", "periodic:2", "--depth", "0",
                       "--format", "json")
    doc = json.loads(out)
    assert code == 0 and len(doc["bands"]) == 2
    assert doc["header"]["version"] == __version__
    assert doc["header"]["config"]["cf"] == "periodic:2"


def test_spectrum_gaps_and_out_file(capsys, tmp_path):
    target = tmp_path / "bands.csv"
    code, out, _ = run(capsys, "spectrum", "--cf", "periodic:1", "--depth", "3", "--level", "2",
                       "--gaps", "--out", str(target))
    assert code == 0 and "level sizes" in out
    assert "# gaps" in target.read_text()


def test_bad_epsilon_exits_4(capsys):
    code, _, err = run(capsys, "spectrum", "--cf", "periodic:1", "--epsilon", "1/2")
    assert code == 4
    assert "EpsilonOutOfRange" in err and "[bandtree]" in err


def test_bad_cf_exits_4(capsys):
    code, _, err = run(capsys, "fstar", "--cf", "periodic:0")
    assert code == 4 and "CFParseError" in err


def test_fstar(capsys):
    code, out, err = run(capsys, "fstar", "--cf", "periodic:1", "--format", "json")
    doc = json.loads(out)
    assert code == 0
    assert doc["f_lower"] == pytest.approx(2 ** 0.5 - 1, abs=1e-10)
    assert doc["neg_log_f_lower"] == pytest.approx(0.881374, abs=1e-6)
    code, out, _ = run(capsys, "fstar", "--cf", "formula:k", "--format", "json")
    assert json.loads(out)["K_infinite"] is True


def test_predim(capsys):
    code, out, err = run(capsys, "predim", "--cf", "periodic:1", "--depth", "5",
                         "--epsilon", "1/24")
    assert code == 0 and err.startswith("s_5 = ")
    data = [l for l in out.splitlines() if not l.startswith("#")]
    assert data[0].split(",")[-1] == "s_k_eps" and len(data) == 6


def test_verify_bulb_passes(capsys):
    code, out, err = run(capsys, "verify", "--cf", "periodic:1", "--depth", "6",
                         "--suite", "bulb", "--gamma", "0.5")
    assert code == 0 and "PASS bulb gamma=0.5" in out


def test_verify_golden_reports_decay_failure(capsys):
    code, out, err = run(capsys, "verify", "--cf", "periodic:1", "--depth", "4",
                         "--suite", "bounds")
    assert code == 2
    assert "FAIL length-decay" in out and "PASS length-bounds" in out
    assert "BoundViolated" in err and "(e12,1,1)" in err


def test_verify_unknown_suite(capsys):
    code, _, err = run(capsys, "verify", "--cf", "periodic:1", "--suite", "nope")
    assert code == 4


def _corrupt(tree):
    victim = tree.level(2)[1]
    with tree.context():
        mid = victim.lo.mid
        victim.hi = bandtree.Enclosure(mid + mpfr(2) ** -200, mid + mpfr(2) ** -199)
    return victim


def test_corrupted_tree_is_caught():
    tree = bandtree.expand_tree(frequency.parse_cf("periodic:2"), 24, 3)
    victim = _corrupt(tree)
    checks = {c.name: c for c in cli.run_suite(tree, ("bounds",))}
    assert not checks["length-bounds"].ok
    assert checks["length-bounds"].word == victim.word
    with pytest.raises(BoundViolated) as err:
        bandtree.verify_band_bounds(tree, strict=True)
    assert err.value.exit_code == 2 and err.value.word == victim.word


def test_gibbs_order_zero(capsys):
    code, out, err = run(capsys, "gibbs", "--cf", "periodic:1", "--depth", "0", "--m", "0",
                         "--format", "json")
    doc = json.loads(out)
    assert code == 0 and "total mass 1" in err
    assert [e["mass"] for e in doc["entries"]] == ["0.5", "0.5"]


def test_gibbs_diagnostics_csv(capsys):
    code, out, _ = run(capsys, "gibbs", "--cf", "periodic:2", "--depth", "6")
    data = [l for l in out.splitlines() if not l.startswith("#")]
    assert code == 0 and data[0].startswith("type,k,count")


def _body(text):
    return "\n".join(l for l in text.splitlines() if not l.startswith("# threads"))


def test_threads_give_identical_output(capsys):
    outs = []
    for threads in ("1", "2"):
        code, out, _ = run(capsys, "spectrum", "--cf", "eventually:3|1", "--depth", "4",
                           "--threads", threads)
        outs.append(_body(out))
    assert outs[0] == outs[1]


def test_header_and_precision_env(capsys, monkeypatch):
    monkeypatch.setenv(cli.PRECISION_ENV, "160")
    code, out, _ = run(capsys, "spectrum", "--cf", "periodic:1", "--depth", "1")
    assert code == 0
    assert f"# tool: sturmdim {__version__}" in out
    assert "# precision: 160" in out and "# precision_bits: 160" in out
    assert "# cf: periodic:1" in out
