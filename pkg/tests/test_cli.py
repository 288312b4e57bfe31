import csv
import json

import numpy as np
import pytest

from vehicle_energy.cli import main
from vehicle_energy.semi_principled import demo_vehicle, save_vehicle


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_ramp_cycle(path, n=120):
    t = np.arange(n, dtype=float)
    v = np.minimum(t * 0.5, 20.0)
    path.write_text("t,v\n" + "".join(f"{a:g},{b:g}\n" for a, b in zip(t, v)))
    return path


@pytest.fixture
def points(tmp_path):
    path = tmp_path / "pts.csv"
    path.write_text("v,a,theta\n0,0,0\n-1,0,0\n20,0.5,0.01\n")
    return path


class TestEval:
    def test_compact_sedan_points(self, tmp_path, points):
        out = tmp_path / "out.csv"
        assert main(["eval", "--vehicle", "compact_sedan", "--points", str(points),
                     "--out", str(out)]) == 0
        rows = read_csv(out)
        assert float(rows[0]["fuel_rate"]) == pytest.approx(0.1592, rel=1e-12)
        assert rows[0]["feasibility"] == "0"
        assert rows[1]["feasibility"] == "2" and float(rows[1]["fuel_rate"]) == 0.0
        assert (tmp_path / "out.csv.versions.json").exists()

    def test_semi_principled_vehicle(self, tmp_path, points):
        veh = tmp_path / "semi.json"
        save_vehicle(demo_vehicle(), veh)
        out = tmp_path / "out.csv"
        assert main(["eval", "--vehicle", str(veh), "--points", str(points),
                     "--out", str(out)]) == 0
        rows = read_csv(out)
        assert list(rows[0]) == ["v", "a", "theta", "fuel_rate", "feasibility", "gear", "N", "T",
                                 "P_wheel"]
        assert rows[1]["feasibility"] == "2"

    def test_missing_vehicle_file(self, tmp_path, points):
        assert main(["eval", "--vehicle", str(tmp_path / "nope.json"), "--points", str(points),
                     "--out", str(tmp_path / "o.csv")]) == 3

    def test_bad_points_file(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("v,a\n1,x\n")
        assert main(["eval", "--vehicle", "compact_sedan", "--points", str(bad),
                     "--out", str(tmp_path / "o.csv")]) == 2
        assert not (tmp_path / "o.csv").exists()

    def test_byte_identical_reruns(self, tmp_path, points):
        outs = []
        for name in ("a.csv", "b.csv"):
            main(["eval", "--vehicle", "midsize_suv", "--points", str(points),
                  "--out", str(tmp_path / name)])
            outs.append((tmp_path / name).read_bytes())
        assert outs[0] == outs[1]


class TestFit:
    def test_grid_dump_round_trip_and_ceiling_failure(self, tmp_path, capsys):
        narrow = tmp_path / "narrow.npz"
        wide = tmp_path / "wide.npz"
        assert main(["eval", "--vehicle", "midsize_suv", "--export-grid", str(narrow)]) == 0
        assert main(["eval", "--vehicle", "midsize_suv", "--export-grid", str(wide),
                     "--grid-axis", "a=-3,5,161"]) == 0

        assert main(["fit", "--grid", str(narrow), "--out", str(tmp_path / "n.json")]) == 4
        assert "fit_feasible_region" in capsys.readouterr().err

        out = tmp_path / "fitted.json"
        assert main(["fit", "--grid", str(wide), "--out", str(out)]) == 0
        fitted = json.loads(out.read_text())
        report = json.loads((tmp_path / "fitted.report.json").read_text())
        assert [s["step"] for s in report["steps"]] == ["step1", "step2", "step3", "step4", "step5"]
        assert fitted["duty"] == "LightDuty"
        from conftest import bundled_table

        truth = bundled_table("midsize_suv")
        for key in ("c0", "c1", "c2", "c3", "z0", "z1", "z2", "b1", "b2", "b3"):
            assert fitted[key] == pytest.approx(truth[key], rel=0.02, abs=1e-3), key


class TestValidate:
    def test_28_rows_and_zero_error(self, tmp_path):
        ramp = write_ramp_cycle(tmp_path / "ramp.csv")
        out = tmp_path / "report.csv"
        args = ["validate", "--vehicle", "compact_sedan", "--reference", "compact_sedan",
                "--cycle", "udds", "--cycle", "hwfet", "--cycle", "us06", "--cycle", str(ramp),
                "--grade=-0.03,-0.02,-0.01,0,0.01,0.02,0.03", "--out", str(out),
                "--traces", str(tmp_path / "traces")]
        assert main(args) == 0
        rows = read_csv(out)
        assert len(rows) == 28
        assert {r["cycle"] for r in rows} == {"udds", "hwfet", "us06", "ramp"}
        assert len({r["grade"] for r in rows}) == 7
        assert all(float(r["rel_error_pct"]) == 0.0 for r in rows)
        traces = sorted(p.name for p in (tmp_path / "traces").iterdir())
        assert len(traces) == 29 and "versions.json" in traces

    def test_half_rate_reference(self, tmp_path):
        model, ref = tmp_path / "m.json", tmp_path / "r.json"
        ramp = write_ramp_cycle(tmp_path / "ramp.csv")
        from conftest import bundled_table

        base = bundled_table("class8_tractor")
        flat = {k: 0.0 for k in ("c1", "c2", "c3", "p0", "p1", "p2", "q0", "q1", "z0", "z1",
                                 "z2", "h1")}
        model.write_text(json.dumps({**base, **flat, "c0": 2.0, "h0": 0.0, "name": "m"}))
        ref.write_text(json.dumps({**base, **flat, "c0": 1.0, "h0": 0.0, "name": "r"}))
        out = tmp_path / "rep.csv"
        assert main(["validate", "--vehicle", str(model), "--reference", str(ref),
                     "--cycle", str(ramp), "--out", str(out)]) == 0
        assert float(read_csv(out)[0]["rel_error_pct"]) == pytest.approx(100.0)

    def test_grade_beyond_range_needs_force(self, tmp_path):
        args = ["validate", "--vehicle", "compact_sedan", "--reference", "compact_sedan",
                "--cycle", "hwfet", "--grade", "0.05", "--out", str(tmp_path / "r.csv")]
        assert main(args) == 3
        assert main(args + ["--force"]) == 0

    def test_reference_trace(self, tmp_path):
        ramp = write_ramp_cycle(tmp_path / "ramp.csv", n=20)
        trace = tmp_path / "ref.csv"
        lines = ["t,v,gear,N,T,fuel,F_wheel,tc_state"]
        lines += [f"{t},{min(t * 0.5, 20):g},1,100,20,0.5,10,locked" for t in range(20)]
        trace.write_text("\n".join(lines) + "\n")
        out = tmp_path / "rep.csv"
        assert main(["validate", "--vehicle", "compact_sedan", "--reference-trace",
                     f"ramp:0:{trace}", "--cycle", str(ramp), "--out", str(out)]) == 0
        row = read_csv(out)[0]
        assert row["realizable"] == "1"


class TestOtherCommands:
    def test_cycles_list(self, capsys):
        assert main(["cycles", "list"]) == 0
        assert "udds" in capsys.readouterr().out

    def test_vcd_round_trip(self, tmp_path):
        veh = tmp_path / "veh.json"
        save_vehicle(demo_vehicle(2), veh)
        sched = tmp_path / "sched.csv"
        assert main(["vcd", "schedule", "--vehicle", str(veh), "--out", str(sched)]) == 0
        assert read_csv(sched)[0] == {"gear": "1", "target_speed": read_csv(sched)[0][
            "target_speed"], "pedal": "0", "dwell_s": "10", "capture_at_s": "8"}

    def test_extract_constants_missing_trace(self, tmp_path):
        assert main(["extract-constants", str(tmp_path / "none.csv"),
                     "--out", str(tmp_path / "c.json")]) == 3
