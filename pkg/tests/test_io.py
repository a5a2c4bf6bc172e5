import os
import subprocess
import sys

import numpy as np
import pytest

from pitmesh import io as pio
from pitmesh.crystal import Bicrystal, Crystal, Homogeneous
from pitmesh.driver import SimConfig, TimeSeries
from pitmesh.io import ConfigError, RunArtifacts, parse_config, write_config
from pitmesh.meshgen import DomainSpec, PitSpec, build_initial_mesh, make_rect_mesh


@pytest.fixture
def pit_mesh():
    mesh, chains, _ = build_initial_mesh(DomainSpec(), PitSpec(nodes=15),
                                         target_h=2.5, seed=1)
    return mesh, chains


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        cfg = parse_config(write(tmp_path, "empty.cfg", ""))
        assert isinstance(cfg.material, Homogeneous)
        assert cfg.material.v_corr == -0.24
        assert cfg.adapt.mu1 == 100.0
        assert cfg.adapt.mu2 == 1.0
        assert cfg.adapt.tau == 1e-5
        assert cfg.electro.V_app == -0.14
        assert cfg.front.dt == 0.5
        assert cfg.pits.nodes == 61

    def test_unknown_key_rejected_with_line(self, tmp_path):
        path = write(tmp_path, "bad.cfg", "mu1 = 10\nbogus_key = 3\n")
        with pytest.raises(ConfigError, match=r"bad.cfg:2.*bogus_key"):
            parse_config(path)

    def test_type_mismatch_names_key(self, tmp_path):
        path = write(tmp_path, "bad.cfg", "mu1 = fast\n")
        with pytest.raises(ConfigError, match="mu1"):
            parse_config(path)

    def test_invariant_violation_rejected(self, tmp_path):
        path = write(tmp_path, "bad.cfg", "mu1 = -1\n")
        with pytest.raises(ConfigError, match="mu1"):
            parse_config(path)

    def test_crystal_material(self, tmp_path):
        path = write(tmp_path, "c.cfg",
                     'material = crystal\nzone_axis = "1 0 1"\nx_dir = "-1 0 1"\n')
        cfg = parse_config(path)
        assert isinstance(cfg.material, Crystal)
        s = 1 / np.sqrt(2)
        expected = np.array([[-s, 0, s], [0, 1, 0], [s, 0, s]])
        assert np.abs(cfg.material.orientation.matrix() - expected).max() < 1e-12

    def test_bicrystal_material(self, tmp_path):
        path = write(tmp_path, "b.cfg", "\n".join([
            "material = bicrystal",
            'zone_axis_left = "0 0 1"', 'x_dir_left = "1 0 0"',
            'zone_axis_right = "1 0 1"', 'x_dir_right = "-1 0 1"',
            "x_interface = 0.5"]) + "\n")
        cfg = parse_config(path)
        assert isinstance(cfg.material, Bicrystal)
        assert cfg.material.x_interface == 0.5

    def test_roundtrip_identity(self, tmp_path):
        cfg = SimConfig()
        cfg.pits.centers = (-6.0, 6.0)
        cfg.adapt.mu2 = 10.0
        cfg.electro.alpha = 0.3
        from pitmesh.crystal import orientation_from_axes
        cfg.material = Crystal(orientation_from_axes([1, 0, 1], [-1, 0, 1]))
        path = str(tmp_path / "round.cfg")
        write_config(cfg, path)
        back = parse_config(path)
        assert back.pits.centers == cfg.pits.centers
        assert back.adapt.mu2 == cfg.adapt.mu2
        assert back.electro.alpha == cfg.electro.alpha
        assert isinstance(back.material, Crystal)
        assert np.abs(back.material.orientation.matrix()
                      - cfg.material.orientation.matrix()).max() < 1e-12
        # a second round trip is bit-identical
        path2 = str(tmp_path / "round2.cfg")
        write_config(back, path2)
        assert open(path).read().splitlines()[1:] \
            == open(path2).read().splitlines()[1:]

    def test_duplicate_key_rejected(self, tmp_path):
        path = write(tmp_path, "dup.cfg", "mu1 = 1\nmu1 = 2\n")
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(path)


class TestMeshExchange:
    def test_roundtrip_bit_exact(self, tmp_path, pit_mesh):
        mesh, _ = pit_mesh
        path = str(tmp_path / "mesh.txt")
        pio.write_mesh(mesh, path)
        back = pio.read_mesh(path)
        assert np.array_equal(back.vertices, mesh.vertices)
        assert np.array_equal(back.triangles, mesh.triangles)
        assert np.array_equal(back.edge_nodes, mesh.edge_nodes)
        assert np.array_equal(back.edge_tags, mesh.edge_tags)
        assert np.array_equal(back.edge_pits, mesh.edge_pits)

    def test_format_layout(self, tmp_path):
        mesh = make_rect_mesh(1, 1)
        path = str(tmp_path / "m.txt")
        pio.write_mesh(mesh, path)
        lines = open(path).read().splitlines()
        assert lines[0] == "$Nodes"
        assert lines[1] == "4"
        assert lines[6] == "$Elements"
        assert lines[7] == "2"

    def test_chains_recoverable(self, tmp_path, pit_mesh):
        mesh, chains = pit_mesh
        path = str(tmp_path / "mesh.txt")
        pio.write_mesh(mesh, path)
        back = pio.read_mesh(path)
        from pitmesh.mesh import chains_from_tags
        rebuilt = chains_from_tags(back)
        assert np.array_equal(rebuilt[0].vertices, chains[0].vertices)


class TestVtk:
    def test_single_triangle_layout(self, tmp_path):
        mesh = make_rect_mesh(1, 1)
        mesh.triangles = mesh.triangles[:1]
        path = str(tmp_path / "one.vtk")
        pio.write_vtk(mesh, np.zeros(4), path)
        text = open(path).read()
        assert "DATASET UNSTRUCTURED_GRID" in text
        assert "POINTS 4 double" in text
        assert "CELLS 1 4" in text
        lines = text.splitlines()
        cell_line = lines[lines.index("CELLS 1 4") + 1]
        assert cell_line.startswith("3 ")
        assert lines[lines.index("CELL_TYPES 1") + 1] == "5"

    def test_coordinates_roundtrip_bit_equal(self, tmp_path, pit_mesh):
        mesh, _ = pit_mesh
        rng = np.random.default_rng(0)
        phi = rng.uniform(-1e-3, 1e-3, mesh.n_vertices)
        path = str(tmp_path / "snap.vtk")
        pio.write_vtk(mesh, phi, path)
        pts, phi_back = pio.read_vtk_points_and_phi(path)
        assert np.array_equal(pts, mesh.vertices)
        assert np.array_equal(phi_back, phi)

    def test_phi_record_length(self, tmp_path, pit_mesh):
        mesh, _ = pit_mesh
        path = str(tmp_path / "snap.vtk")
        pio.write_vtk(mesh, np.zeros(mesh.n_vertices), path)
        _, phi_back = pio.read_vtk_points_and_phi(path)
        assert len(phi_back) == mesh.n_vertices


class TestTimeSeriesCsv:
    def make_series(self):
        series = TimeSeries()
        series.append(0.0, 5.0, 10.0)
        series.append(0.5, 5.01, 10.02)
        series.append(1.0, 5.03, 10.05)
        return series

    def test_header_and_initial_row(self, tmp_path):
        path = str(tmp_path / "ts.csv")
        pio.write_timeseries(self.make_series(), path)
        lines = open(path).read().splitlines()
        assert lines[0] == "t,depth_um,width_um"
        assert lines[1] == "0,5,10"
        assert len(lines) == 4

    def test_roundtrip_monotone(self, tmp_path):
        path = str(tmp_path / "ts.csv")
        pio.write_timeseries(self.make_series(), path)
        back = pio.read_timeseries(path)
        t, d, w = back.arrays()
        assert np.all(np.diff(t) > 0)
        assert np.all(np.diff(d) >= 0)
        assert np.all(np.diff(w) >= 0)

    def test_empty_series_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="empty"):
            pio.write_timeseries(TimeSeries(), str(tmp_path / "x.csv"))


class TestArtifacts:
    def test_prepare_creates_and_probes(self, tmp_path):
        art = RunArtifacts(str(tmp_path / "out"))
        art.prepare()
        assert os.path.isdir(art.out_dir)
        assert art.timeseries_path.endswith("timeseries.csv")

    def test_unwritable_dir_raises(self):
        art = RunArtifacts("/proc/definitely/not/writable")
        with pytest.raises(OSError):
            art.prepare()


class TestCli:
    def run_cli(self, *args):
        from pitmesh.cli import main
        return main(list(args))

    def test_fit_command(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        t = np.arange(0.0, 40.0, 0.5)
        series = TimeSeries()
        for tv in t:
            series.append(tv, 0.1 * (tv + 1) ** 0.9 + 5.0,
                          0.2 * (tv + 1) ** 0.95 + 10.0) if tv > 0 \
                else series.append(0.0, 5.1, 10.2)
        path = str(tmp_path / "ts.csv")
        pio.write_timeseries(series, path)
        assert self.run_cli("fit", path, "--column", "depth") == 0
        out = capsys.readouterr().out
        assert "b = 0.9" in out

    def test_config_error_exit_code_1(self, tmp_path, capsys):
        path = write(tmp_path, "bad.cfg", "nonsense = 1\n")
        assert self.run_cli("init-mesh", path, "-o",
                            str(tmp_path / "m.txt")) == 1

    def test_missing_file_exit_code_1(self, tmp_path):
        assert self.run_cli("fit", str(tmp_path / "nope.csv")) == 1

    def test_init_mesh_and_smooth_roundtrip(self, tmp_path, capsys):
        cfg = write(tmp_path, "small.cfg",
                    "target_h = 2.5\npit_nodes = 15\n")
        mesh_path = str(tmp_path / "mesh.txt")
        assert self.run_cli("init-mesh", cfg, "-o", mesh_path) == 0
        assert self.run_cli("smooth", cfg, mesh_path, "-o",
                            str(tmp_path / "smoothed.txt")) == 0
        assert os.path.exists(str(tmp_path / "smoothed.txt"))

    def test_run_command_writes_artifacts(self, tmp_path, capsys):
        cfg = write(tmp_path, "run.cfg", "\n".join([
            "target_h = 2.0", "pit_nodes = 15", "t_end = 6.0",
            "vtk_every = 2"]) + "\n")
        out_dir = str(tmp_path / "out")
        assert self.run_cli("run", cfg, "-o", out_dir) == 0
        for name in ("timeseries.csv", "summary.txt", "mesh_final.txt",
                     "final.vtk"):
            assert os.path.exists(os.path.join(out_dir, name))
        summary = open(os.path.join(out_dir, "summary.txt")).read()
        assert "merge events: 0" in summary
        assert "power-law fit" in summary
        assert os.path.exists(os.path.join(out_dir, "snapshot_00000.vtk"))

    def test_console_entrypoint(self, tmp_path):
        result = subprocess.run([sys.executable, "-m", "pitmesh.cli", "fit",
                                 str(tmp_path / "missing.csv")],
                                capture_output=True, text=True)
        assert result.returncode == 1
