import csv
import io
import json

import pytest

from symindex import cli
from symindex.orbit_io import orbit_to_dict, save_orbit
from symindex.presets import build_preset
from symindex.report import (
    CSV_COLUMNS,
    Scenario,
    plot_to_csv,
    report_to_text,
    reports_from_json,
    reports_to_csv,
    reports_to_json,
    run_scenario,
)

FAST = ["--steps", "800", "--galerkin-n", "16"]


class TestReport:
    def test_json_round_trip(self, preset_report):
        reports = [preset_report(n)[0] for n in ("flat_torus", "kepler_circular")]
        text = reports_to_json(reports)
        doc = json.loads(text)
        assert doc["schema"] == "report_v1" and len(doc["reports"]) == 2
        back = reports_from_json(text)
        assert reports_to_json(back) == text

    def test_rejects_other_schema(self, preset_report):
        doc = json.loads(reports_to_json([preset_report("flat_torus")[0]]))
        doc["schema"] = "report_v0"
        with pytest.raises(Exception):
            reports_from_json(json.dumps(doc))

    def test_deterministic(self):
        first = reports_to_json([run_scenario(Scenario("circle_free_particle", {}, steps=400, galerkin_n=8))[0]])
        second = reports_to_json([run_scenario(Scenario("circle_free_particle", {}, steps=400, galerkin_n=8))[0]])
        assert first == second

    def test_csv_batch(self, preset_report):
        reports = [preset_report(n)[0] for n in ("flat_torus", "harmonic_loop", "kepler_circular")]
        rows = list(csv.DictReader(io.StringIO(reports_to_csv(reports))))
        assert len(rows) == 3 and tuple(rows[0]) == CSV_COLUMNS
        assert [r["igeo"] for r in rows] == ["2", "4", "2"]

    def test_text_ledger(self, preset_report):
        text = report_to_text(preset_report("flat_torus")[0])
        assert "= (0) + (0) + (1) + (1)" in text
        assert "CertifiedUnstable" in text
        assert text.count(": ok") == 4

    def test_plot_series(self, preset_report):
        report, plot = preset_report("kepler_circular")
        rows = list(csv.DictReader(io.StringIO(plot_to_csv([("kepler_circular", plot)]))))
        series = {r["series"] for r in rows}
        assert series == {"kappa", "monodromy_multiplier", "px_multiplier", "sweep_free", "sweep_fixed"}
        assert sum(r["series"] == "monodromy_multiplier" for r in rows) == 2 * report.n

    def test_expected_verdicts(self, preset_report):
        flat, _ = preset_report("flat_torus")
        kepler, _ = preset_report("kepler_circular")
        harmonic, _ = preset_report("harmonic_loop")
        assert flat.criterion["theorem"] == "CertifiedUnstable"
        assert kepler.criterion["theorem"] == "Inconclusive" and kepler.difference["value"] == 1
        assert harmonic.tprime_h == 0.0 and abs(harmonic.gamma1_slope) < 1e-9


class TestCli:
    def test_run_json_and_plot(self, tmp_path):
        out = tmp_path / "r.json"
        assert cli.main(["run", "--scenario", "flat_torus", *FAST, "--out", str(out)]) == cli.EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["reports"][0]["provenance"]["N"] == 16
        assert (tmp_path / "r.plot.csv").read_text().startswith("scenario,series,x,index,value,imag")

    def test_csv_batch(self, tmp_path):
        out = tmp_path / "r.csv"
        args = ["run", *FAST, "--format", "csv", "--out", str(out)]
        for name in ("flat_torus", "circle_free_particle", "kepler_circular"):
            args += ["--scenario", name]
        assert cli.main(args) == cli.EXIT_OK
        assert len(out.read_text().strip().splitlines()) == 4

    def test_text_to_stdout(self, capsys):
        assert cli.main(["run", "--scenario", "circle_free_particle", *FAST, "--format", "text"]) == 0
        assert "parity ledger" in capsys.readouterr().out

    def test_yaml_precedence(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("scenario: flat_torus\nsteps: 600\ngalerkin_n: 12\noptions:\n  length: 2.0\n")
        out = tmp_path / "r.json"
        assert cli.main(["run", "--config", str(cfg), "--galerkin-n", "8", "--out", str(out)]) == 0
        prov = json.loads(out.read_text())["reports"][0]["provenance"]
        assert (prov["steps"], prov["N"], prov["options"]["length"]) == (600, 8, 2.0)

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("scenario: flat_torus\nbogus: 1\n")
        assert cli.main(["run", "--config", str(cfg)]) == cli.EXIT_CONTRACT

    def test_unknown_scenario(self):
        assert cli.main(["run", "--scenario", "no_such_orbit"]) == cli.EXIT_CONTRACT

    def test_not_non_null_file(self, tmp_path, sign_changing_orbit):
        path = tmp_path / "bad.json"
        save_orbit(sign_changing_orbit, path)
        assert cli.main(["run", "--scenario", str(path), *FAST]) == cli.EXIT_CONTRACT

    def test_missing_tprime_file(self, tmp_path):
        doc = orbit_to_dict(build_preset("flat_torus"))
        doc.pop("tprime_h", None)
        path = tmp_path / "orbit.json"
        path.write_text(json.dumps(doc))
        assert cli.main(["run", "--scenario", str(path), *FAST]) == cli.EXIT_CONTRACT

    def test_split_failure_is_numerical(self, tmp_path, capsys):
        out = tmp_path / "r.json"
        code = cli.main(["run", "--scenario", "kepler_circular", *FAST, "--split-tol", "1e-30", "--out", str(out)])
        assert code == cli.EXIT_NUMERICAL
        assert json.loads(out.read_text())["reports"][0]["splitting_available"] is False
        assert "splitting unavailable" in capsys.readouterr().err

    def test_bad_option_syntax(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["run", "--scenario", "flat_torus", "--option", "novalue"])
        assert exc.value.code == 2
