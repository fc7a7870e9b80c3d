import csv
import io
import json
import math

import pytest

from nspoisson.cli import (CHECKS, RECORD_COLUMNS, bundled_scenarios, check_seed, main,
                           parse_scenario, run_scenario, to_csv_tables, to_json, validate_report)
from nspoisson.errors import ConfigError

SMALL = """\
schema_version: 1
name: small
seed: 5
checks:
  - check: chi
    params: {measure: weighted_line, t_values: [1.0, 2.0], tol: 1.0e-8}
"""


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def small_file(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


class TestParsing:
    def test_small_scenario(self):
        sc = parse_scenario(SMALL)
        assert sc.name == "small" and sc.seed == 5
        assert sc.checks[0].check == "chi"

    @pytest.mark.parametrize("text, fragment", [
        ("schema_version: 2\nname: x\nseed: 1\nchecks: [{check: chi}]\n", "schema_version"),
        (SMALL + "extra: 1\n", "unknown scenario keys"),
        (SMALL.replace("tol: 1.0e-8", "tol: 1.0e-8, bogus: 3"), "unknown params"),
        (SMALL.replace("check: chi", "check: nope"), "unknown check"),
        ("schema_version: 1\nname: x\nseed: 1\nchecks: []\n", "nonempty"),
        ("[1, 2", "YAML"),
        (SMALL.replace("seed: 5", "seed: five"), "seed"),
    ])
    def test_rejections(self, text, fragment):
        with pytest.raises(ConfigError, match=fragment):
            parse_scenario(text)

    def test_duplicate_labels(self):
        text = SMALL + "  - check: chi\n"
        with pytest.raises(ConfigError, match="duplicate"):
            parse_scenario(text)

    def test_every_bundled_scenario_parses(self):
        names = bundled_scenarios()
        assert len(names) == 11
        from nspoisson.cli import resolve_config
        for n in names:
            parse_scenario(resolve_config(n)[0])

    def test_registry_covers_bundled_checks(self):
        from nspoisson.cli import resolve_config
        used = {c.check for n in bundled_scenarios() for c in parse_scenario(resolve_config(n)[0]).checks}
        assert used <= set(CHECKS)


class TestRunning:
    def test_report_passes_and_validates(self):
        rep = run_scenario(parse_scenario(SMALL))
        assert rep["verdict"] == "pass"
        assert validate_report(json.loads(to_json(rep))) == []

    def test_deterministic_bytes(self):
        sc = parse_scenario(SMALL)
        assert to_json(run_scenario(sc)) == to_json(run_scenario(sc))

    def test_seed_override_changes_check_seeds(self):
        sc = parse_scenario(SMALL)
        assert run_scenario(sc, seed=6)["checks"][0]["seed"] == check_seed(6, 0) != check_seed(5, 0)

    def test_no_timing_in_report(self):
        timings = {}
        text = to_json(run_scenario(parse_scenario(SMALL), timings=timings))
        assert set(timings) == {"chi"}
        assert "time" not in text and "elapsed" not in text

    def test_translation_target_follows_measure(self):
        # densities 1, 3, 0.5 around edges 0 and 1: χ(T_{−t}) = t(0.5 − 1)
        text = SMALL.replace("measure: weighted_line, t_values: [1.0, 2.0]",
                             "measure: {kind: piecewise, edges: [-.inf, 0, 1, .inf], densities: [1, 3, 0.5]}, t_values: [2.0]")
        rec = run_scenario(parse_scenario(text))["checks"][0]["records"][0]
        assert rec["target"] == -1.0 and rec["verdict"] == "pass"

    def test_numeric_error_becomes_failing_check(self):
        text = SMALL.replace("t_values: [1.0, 2.0]",
                             "conservative: [{kind: dilation, c: 2.0}]")
        rep = run_scenario(parse_scenario(text))
        assert rep["verdict"] == "fail"
        assert "error" in rep["checks"][0]
        assert validate_report(rep) == []

    def test_validator_catches_tampering(self):
        rep = json.loads(to_json(run_scenario(parse_scenario(SMALL))))
        rep["checks"][0]["records"][0]["mode"] = "vibes"
        del rep["seed"]
        problems = validate_report(rep)
        assert len(problems) >= 2

    def test_csv_tables(self):
        rep = run_scenario(parse_scenario(SMALL))
        tables = to_csv_tables(rep)
        rows = list(csv.reader(io.StringIO(tables[""])))
        assert tuple(rows[0]) == RECORD_COLUMNS
        assert len(rows) == 1 + len(rep["checks"][0]["records"])


class TestMain:
    def test_list(self):
        code, out, _ = run(["--list"])
        assert code == 0 and out.split() == bundled_scenarios()

    def test_config_path_and_out_dir(self, small_file, tmp_path):
        out_dir = tmp_path / "out"
        code, out, err = run(["--config", str(small_file), "--out-dir", str(out_dir), "--quiet"])
        assert code == 0 and out == "" and err == ""
        report = out_dir / "small.json"
        assert report.is_file()
        assert run(["--validate", str(report)])[0] == 0

    def test_bundled_name(self):
        code, out, err = run(["--config", "chi_translation"])
        assert code == 0
        assert json.loads(out)["verdict"] == "pass"
        assert "chi_translation" in err

    def test_csv_format(self, small_file, tmp_path):
        code, _, _ = run(["--config", str(small_file), "--out-dir", str(tmp_path), "--format", "csv", "--quiet"])
        assert code == 0 and (tmp_path / "small.csv").is_file()

    def test_config_errors_exit_2(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text(SMALL.replace("check: chi", "check: nope"))
        code, _, err = run(["--config", str(bad)])
        assert code == 2 and "unknown check" in err
        assert run(["--config", "no_such_scenario"])[0] == 2
        assert run(["--config", str(bad), "--trials-scale", "0"])[0] == 2

    def test_argparse_errors_exit_2(self):
        with pytest.raises(SystemExit) as info:
            main(["--format", "xml", "--all"])
        assert info.value.code == 2

    def test_failing_scenario_exits_1(self, tmp_path):
        p = tmp_path / "f.yaml"
        p.write_text(SMALL.replace("t_values: [1.0, 2.0]", "conservative: [{kind: dilation, c: 2.0}]"))
        assert run(["--config", str(p), "--quiet"])[0] == 1

    def test_validate_unreadable(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("{not json")
        assert run(["--validate", str(p)])[0] == 2
