import json

import pytest

import plot_figure
import render_table
from schemas import GRID_COLUMNS, TRAJECTORY_COLUMNS, SchemaError, read_table


def png_ok(path):
    return path.exists() and path.stat().st_size > 1000


class TestFigures:
    def test_growth_curves(self, artifacts, tmp_path):
        out = tmp_path / "fig_growth.png"
        code = plot_figure.main(["--kind", "growth-curves", "--in", str(artifacts / "growth.csv"), "--out", str(out)])
        assert code == 0 and png_ok(out)

    def test_phase_portrait(self, artifacts, tmp_path):
        out = tmp_path / "fig_phase.png"
        code = plot_figure.main([
            "--kind", "phase-portrait",
            "--in", str(artifacts / "opt_d01.csv"),
            "--in", str(artifacts / "opt_d10.csv"),
            "--out", str(out), "--s-bar", "1.0",
        ])
        assert code == 0 and png_ok(out)

    def test_level_sets(self, artifacts, tmp_path):
        out = tmp_path / "fig_levels.png"
        code = plot_figure.main([
            "--kind", "level-sets",
            "--in", str(artifacts / "grid_v0.csv"),
            "--in", str(artifacts / "grid_vinf.csv"),
            "--out", str(out),
        ])
        assert code == 0 and png_ok(out)

    def test_trajectory_controls(self, artifacts, tmp_path):
        out = tmp_path / "fig_controls.png"
        code = plot_figure.main([
            "--kind", "trajectory-controls", "--in", str(artifacts / "onepump.csv"), "--out", str(out),
        ])
        assert code == 0 and png_ok(out)

    def test_full_vs_reduced(self, artifacts, tmp_path):
        out = tmp_path / "fig_full.png"
        code = plot_figure.main([
            "--kind", "full-vs-reduced",
            "--in", str(artifacts / "full_eps0.1.csv"),
            "--in", str(artifacts / "full_eps0.02.csv"),
            "--in", str(artifacts / "opt_d01.csv"),
            "--out", str(out), "--r", "0.3",
        ])
        assert code == 0 and png_ok(out)


class TestSchemaRejection:
    def test_wrong_columns_diagnosed(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("time,a,b\n0,1,2\n")
        with pytest.raises(SystemExit) as exc:
            plot_figure.main(["--kind", "phase-portrait", "--in", str(bad), "--out", str(tmp_path / "x.png")])
        assert exc.value.code == 2
        err = capsys.readouterr().err
        assert "missing" in err and "s1" in err
        assert not (tmp_path / "x.png").exists()

    def test_empty_trajectory_rejected(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text(",".join(TRAJECTORY_COLUMNS) + "\n")
        with pytest.raises(SystemExit) as exc:
            plot_figure.main(["--kind", "trajectory-controls", "--in", str(empty), "--out", str(tmp_path / "y.png")])
        assert exc.value.code == 2
        assert not (tmp_path / "y.png").exists()

    def test_grid_without_sidecar_rejected(self, tmp_path):
        grid = tmp_path / "lonely.csv"
        grid.write_text(",".join(GRID_COLUMNS) + "\n0,0,0\n")
        with pytest.raises(SystemExit) as exc:
            plot_figure.main(["--kind", "level-sets", "--in", str(grid), "--out", str(tmp_path / "z.png")])
        assert exc.value.code == 2

    def test_read_table_reports_nonnumeric(self, tmp_path):
        bad = tmp_path / "nn.csv"
        bad.write_text("s1,s2,value\n0,0,abc\n")
        with pytest.raises(SchemaError, match="not numeric"):
            read_table(str(bad), GRID_COLUMNS)


class TestRenderTable:
    def test_renders_real_comparison(self, artifacts, tmp_path, capsys):
        out = tmp_path / "table.md"
        code = render_table.main(["--in", str(artifacts / "cmp.json"), "--out", str(out)])
        assert code == 0
        text = out.read_text()
        assert "V_d (d=0.1)" in text and "T*_cst (d=10" in text and "T*_one" in text
        assert "(4, 0.5)" in text
        assert "increase" in text
        payload = json.loads((artifacts / "cmp.json").read_text())
        cell = next(c for c in payload["cells"] if c["d"] == 10.0)
        assert f"{cell['v_d']:.2f}" in text

    def test_single_cell_table(self, tmp_path):
        payload = {
            "cells": [
                {
                    "x0": [4.0, 4.0], "d": 0.1, "s_bar": 1.0,
                    "v_d": 5.40, "t_cst": 5.71, "t_one": 17.69,
                    "cst_alpha": 0.3, "cst_sr_star": 0.6,
                    "t_one_patch": 1, "t_one_other_patch": 10.13,
                    "inc_cst_pct": 5.7, "inc_one_pct": 227.7,
                }
            ]
        }
        src = tmp_path / "one.json"
        src.write_text(json.dumps(payload))
        code = render_table.main(["--in", str(src)])
        assert code == 0

    def test_missing_cell_renders_placeholder_and_exit_4(self, tmp_path, capsys):
        payload = {
            "cells": [
                {"x0": [0.5, 0.5], "d": 0.1, "s_bar": 1.0, "error": "InfeasibleSearch: inside target"},
            ]
        }
        src = tmp_path / "failed.json"
        src.write_text(json.dumps(payload))
        code = render_table.main(["--in", str(src)])
        assert code == 4
        out = capsys.readouterr().out
        assert "—" in out

    def test_malformed_json_rejected(self, tmp_path):
        src = tmp_path / "broken.json"
        src.write_text("{not json")
        with pytest.raises(SystemExit) as exc:
            render_table.main(["--in", str(src)])
        assert exc.value.code == 2
