import hashlib
import json
import shutil
import subprocess
import sys

import pytest

from metatok.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def work(tmp_path, fixtures):
    for f in fixtures.iterdir():
        shutil.copy(f, tmp_path / f.name)
    return tmp_path


# --------------------------------------------------------------------------- compress / decompress


def test_roundtrip_by_hash(work, capsys):
    src = work / "service.log"
    code, out, _ = run(capsys, "compress", src, "-o", work / "s.json", "--l-max", 6)
    assert code == 0
    assert json.loads(out)["cr_input"] > 0
    code, _, _ = run(capsys, "decompress", work / "s.json", "-o", work / "back.log")
    assert code == 0
    assert sha(work / "back.log") == sha(src)


def test_roundtrip_odd_bytes(work, capsys):
    src = work / "odd.txt"
    src.write_bytes(b"x y z\r\nx y z\r\n\xff\xfe x y z \t\n<M1> <M1>\n")
    assert run(capsys, "compress", src)[0] == 0
    assert run(capsys, "decompress", f"{src}.mtk.json", "-o", work / "back.txt")[0] == 0
    assert (work / "back.txt").read_bytes() == src.read_bytes()


def test_compress_nine_word_fixture(work, capsys):
    code, out, _ = run(capsys, "compress", work / "abc3.txt", "--l-max", 3, "--f-min", 2)
    report = json.loads(out)
    assert code == 0
    assert report["cr"] == pytest.approx(0.667, abs=5e-4)
    assert report["cr_input"] == pytest.approx(0.222, abs=5e-4)
    assert (report["original_tokens"], report["compressed_tokens"], report["dictionary_tokens"]) == (9, 3, 4)
    assert report["dict_entries"] == 1 and report["cost_model"] == "word"


def test_compress_golden_envelope(work, fixtures, capsys):
    run(capsys, "compress", work / "abc3.txt", "--l-max", 3, "-o", work / "out.json")
    assert (work / "out.json").read_bytes() == (fixtures / "abc3.golden.json").read_bytes()


def test_compress_reservation_warning(work, capsys, caplog):
    src = work / "r.txt"
    src.write_text("<M4> a b c a b c a b c\n")
    with caplog.at_level("WARNING"):
        assert run(capsys, "compress", src)[0] == 0
    assert "<M5>" in caplog.text


def test_missing_input_exit_2(work, capsys):
    code, _, err = run(capsys, "compress", work / "nope.txt")
    assert code == 2 and "nope.txt" in err
    assert run(capsys, "decompress", work / "nope.json")[0] == 2
    assert run(capsys, "score", work / "nope.txt", work / "abc3.txt")[0] == 2


def test_bad_params_exit_2(work, capsys):
    assert run(capsys, "compress", work / "abc3.txt", "--l-max", 1)[0] == 2
    assert run(capsys, "compress", work / "abc3.txt", "--cost-model", "bogus")[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["compress", str(work / "abc3.txt"), "--split", "--envelope"])
    assert exc.value.code == 2


def test_unresolved_label_exit_3(work, capsys):
    code, out, err = run(capsys, "decompress", work / "unresolved.json")
    assert code == 3 and "<M2>" in err and out == ""


def test_corrupt_dictionary_exit_2(work, capsys):
    bad = work / "bad.json"
    bad.write_text('{"dictionary": {"entries": {"<M1>": "a"}, "entries": {}}, "compressed": ""}')
    code, _, err = run(capsys, "decompress", bad)
    assert code == 2 and "duplicate" in err


def test_split_and_envelope_agree(work, capsys):
    src = work / "service.log"
    run(capsys, "compress", src, "--split", "-o", work / "parts")
    run(capsys, "compress", src, "--envelope", "-o", work / "env.json")
    assert (work / "parts.cmp").exists() and (work / "parts.dict").exists()
    _, split_out, _ = run(capsys, "decompress", work / "parts.cmp", "--dict", work / "parts.dict")
    _, env_out, _ = run(capsys, "decompress", work / "env.json")
    assert split_out == env_out == src.read_text()


# --------------------------------------------------------------------------- sweep


def test_sweep_golden_csv(work, fixtures, capsys):
    code, out, _ = run(capsys, "sweep", work / "fixture.txt", "--l-min", 3, "--l-max", 4)
    assert code == 0
    assert out == (fixtures / "fixture.golden.csv").read_text()


def test_sweep_empty_corpus(work, capsys):
    (work / "empty.txt").write_text("")
    code, out, _ = run(capsys, "sweep", work / "empty.txt", "-o", work / "e.csv")
    assert code == 0
    assert (work / "e.csv").read_text() == "dataset,l_max,cr,cr_input,dict_entries,levenshtein,rouge,bleu\n"


def test_sweep_single_value(work, capsys):
    _, out, _ = run(capsys, "sweep", work / "service.log", "--l-min", 3, "--l-max", 3)
    assert len(out.splitlines()) == 2
    assert out.splitlines()[1].startswith("service,3,")


def test_sweep_bad_range(work, capsys):
    assert run(capsys, "sweep", work / "fixture.txt", "--l-min", 5, "--l-max", 4)[0] == 2
    assert run(capsys, "sweep", work / "fixture.txt", "--l-min", 1, "--l-max", 4)[0] == 2


def test_sweep_budget_and_jobs_deterministic(work, capsys):
    args = ("sweep", work / "service.log", "--l-min", 3, "--l-max", 6, "--budget-tokens", 200)
    _, serial, _ = run(capsys, *args)
    _, parallel, _ = run(capsys, *args, "--jobs", 2)
    assert serial == parallel


def test_sweep_validate_with_regression(work, capsys):
    reg = work / "reg.json"
    code, out, _ = run(
        capsys, "sweep", work / "service.log", "--l-min", 3, "--l-max", 6,
        "--validate", "--mock-script", work / "mock_damage.json",
        "--budget-tokens", 300, "--regression-json", reg,
    )
    assert code == 0
    rows = out.splitlines()[1:]
    assert len(rows) == 4
    for row in rows:
        lev, rouge, bleu = (float(v) for v in row.split(",")[5:])
        assert 0 < lev < 1 and 0 < rouge <= 1 and 0 < bleu < 1
    fits = json.loads(reg.read_text())
    assert set(fits) == {"levenshtein", "rouge", "bleu"}


def test_sweep_validate_oracle_scores(work, capsys):
    _, out, _ = run(capsys, "sweep", work / "fixture.txt", "--l-min", 3, "--l-max", 4, "--validate", "--mock-oracle")
    assert out.splitlines()[1] == "fixture,3,0.666667,0.333333,1,1.000000,1.000000,1.000000"


# --------------------------------------------------------------------------- score


def test_score_identical(work, capsys):
    code, out, _ = run(capsys, "score", work / "service.log", work / "service.log")
    report = json.loads(out)
    assert code == 0
    assert all(report[k] == 1.0 for k in report if k != "n")


def test_score_single_char_edit(work, capsys):
    _, out, _ = run(capsys, "score", work / "edit_original.txt", work / "edit_candidate.txt")
    n = len((work / "edit_original.txt").read_text())
    assert json.loads(out)["levenshtein"] == pytest.approx(1 - 1 / n)
    assert json.loads(out)["exact_match"] == 0.0


def test_score_empty_candidate(work, capsys):
    (work / "empty.txt").write_text("")
    _, out, _ = run(capsys, "score", work / "service.log", work / "empty.txt")
    report = json.loads(out)
    assert report["bleu"] == 0.0 and report["levenshtein"] == 0.0


# --------------------------------------------------------------------------- validate


def test_validate_mock_oracle(work, capsys):
    code, out, _ = run(
        capsys, "validate", work / "service.log", "--mock-oracle", "--budget-tokens", 250,
        "--artifacts", work / "art", "-o", work / "rep.json",
    )
    report = json.loads(out)
    assert code == 0
    assert report == json.loads((work / "rep.json").read_text())
    agg = report["aggregate"]
    assert all(agg[k] == 1.0 for k in agg if k not in ("n", "std", "sem"))
    assert len(list((work / "art").glob("batch_*.json"))) == agg["n"] > 1


def test_validate_template_mode(work, capsys):
    code, out, _ = run(
        capsys, "validate", work / "service.log", "--mode", "template", "--templates", work / "templates.tsv",
        "--mock-oracle",
    )
    agg = json.loads(out)["aggregate"]
    assert code == 0 and agg["n"] == 120 and agg["exact_match"] == 1.0


def test_validate_template_mode_needs_templates(work, capsys):
    code, _, err = run(capsys, "validate", work / "service.log", "--mode", "template", "--mock-oracle")
    assert code == 2 and "templates" in err


def test_validate_scripted_damage_is_deterministic(work, capsys):
    args = ("validate", work / "service.log", "--mock-script", work / "mock_damage.json", "--budget-tokens", 250)
    _, first, _ = run(capsys, *args)
    _, second, _ = run(capsys, *args, "--jobs", 4)
    a, b = json.loads(first)["aggregate"], json.loads(second)["aggregate"]
    assert a == b
    assert a["exact_match"] == 0.0
    assert 0.9 < a["levenshtein"] < 1.0


def test_validate_without_client_config(work, capsys, monkeypatch):
    monkeypatch.delenv("METATOK_ENDPOINT", raising=False)
    code, _, err = run(capsys, "validate", work / "service.log")
    assert code == 2 and "--endpoint" in err


def test_validate_oversized_line(work, capsys):
    code, _, err = run(capsys, "validate", work / "service.log", "--mock-oracle", "--max-output-tokens", 5)
    assert code == 2


def test_module_entry_point(work):
    proc = subprocess.run(
        [sys.executable, "-m", "metatok", "compress", str(work / "abc3.txt"), "--l-max", "3"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["cr_input"] == pytest.approx(2 / 9)
