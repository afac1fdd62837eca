import numpy as np
import pytest
from click.testing import CliRunner

from meshsteer.cli import deform, deform_volume
from meshsteer.generators import generate_box_channel
from meshsteer.mesh import extract_surface, read_displacement_field, save_tet_mesh


@pytest.fixture(scope="module")
def mesh_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "channel.tet"
    mesh = generate_box_channel(6, 4, 4, (1.0, 0.5, 0.5))
    save_tet_mesh(mesh, path)
    return path, mesh


class TestDeformCommand:
    def test_translate_writes_field(self, mesh_file, tmp_path):
        path, mesh = mesh_file
        out = tmp_path / "field.disp"
        result = CliRunner().invoke(
            deform,
            [
                "--mesh", str(path), "--action", "translate",
                "--handles", "1", "--fixed", "0",
                "--vector", "0.01,0,0", "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        fld = read_displacement_field(out)
        assert fld.vertex_count == extract_surface(mesh).num_vertices
        assert np.abs(fld.values[:, 0]).max() == pytest.approx(0.01)

    def test_bad_vector_rejected(self, mesh_file, tmp_path):
        path, _ = mesh_file
        result = CliRunner().invoke(
            deform,
            [
                "--mesh", str(path), "--action", "translate",
                "--vector", "1,2", "--out", str(tmp_path / "x.disp"),
            ],
        )
        assert result.exit_code != 0


class TestDeformVolumeCommand:
    def test_schedule_with_report(self, mesh_file, tmp_path):
        path, mesh = mesh_file
        out = tmp_path / "field.disp"
        CliRunner().invoke(
            deform,
            [
                "--mesh", str(path), "--action", "translate",
                "--handles", "5", "--fixed", "4",
                "--vector", "0,0,-0.02", "--out", str(out),
            ],
            catch_exceptions=False,
        )
        report = tmp_path / "quality.csv"
        result = CliRunner().invoke(
            deform_volume,
            [
                "--mesh", str(path), "--disp", str(out),
                "--method", "harmonic", "--steps", "3",
                "--quality-report", str(report),
            ],
        )
        assert result.exit_code == 0, result.output
        lines = report.read_text().strip().splitlines()
        assert lines[0] == "step,mean,min,max,inverted"
        assert len(lines) == 4

    def test_mismatched_field_fails(self, mesh_file, tmp_path):
        path, _ = mesh_file
        bad = tmp_path / "bad.disp"
        bad.write_text("dispfield v1 2\n0 0 0\n0 0 0\n")
        result = CliRunner().invoke(
            deform_volume, ["--mesh", str(path), "--disp", str(bad)]
        )
        assert result.exit_code != 0
