import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from flowface.cli import main


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def bundle(runner, tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    result = runner.invoke(
        main,
        ["gen-fixtures", "--out", str(root), "--kind", "sequence", "--frames", "3", "--size", "64"],
    )
    assert result.exit_code == 0, result.output
    return json.loads(result.output)["artifacts"]["sequence"]


class TestGenFixtures:
    def test_all_kinds(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["gen-fixtures", "--out", str(tmp_path), "--kind", "all", "--frames", "2",
             "--size", "64"],
        )
        assert result.exit_code == 0, result.output
        artifacts = json.loads(result.output)["artifacts"]
        assert set(artifacts) == {"grid", "slit", "sequence"}
        assert Path(artifacts["grid"]["mesh"]).exists()


class TestWeightsCommand:
    def test_writes_weights(self, runner, bundle, tmp_path):
        out = tmp_path / "weights.json"
        result = runner.invoke(
            main,
            [
                "weights",
                "--mesh", bundle["mesh"],
                "--camera", bundle["camera"],
                "--landmarks", bundle["landmarks"],
                "--out", str(out),
                "--k", "6",
            ],
        )
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["k"] == 6
        assert out.exists()


class TestRetargetCommand:
    def test_full_run_with_override(self, runner, bundle, tmp_path):
        out_dir = tmp_path / "objs"
        result = runner.invoke(
            main,
            ["retarget", "--config", bundle["config"], "--output-dir", str(out_dir),
             "--workers", "2"],
        )
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert body["frames_written"] == 3
        assert len(list(out_dir.glob("frame_*.obj"))) == 3

    def test_missing_flow_exits_nonzero_naming_frame(self, runner, tmp_path):
        gen = runner.invoke(
            main,
            ["gen-fixtures", "--out", str(tmp_path), "--kind", "sequence", "--frames", "5",
             "--size", "64"],
        )
        seq = json.loads(gen.output)["artifacts"]["sequence"]
        (Path(seq["flow_dir"]) / "flow_00003.flo").unlink()
        result = runner.invoke(main, ["retarget", "--config", seq["config"]])
        assert result.exit_code != 0
        assert "frame 3" in result.output

    def test_unreadable_config_exits_nonzero(self, runner):
        result = runner.invoke(main, ["retarget", "--config", "/absent/run.json"])
        assert result.exit_code != 0
        assert "cannot read config" in result.output


class TestWarpCommand:
    def test_single_level(self, runner, rng, tmp_path):
        from flowface.flowio import write_flow
        from flowface.tensorio import read_tensor, write_tensor

        x = rng.normal(size=(1, 6, 6))
        write_tensor(tmp_path / "x.bin", x)
        write_flow(tmp_path / "zero.flo", np.zeros((2, 6, 6), np.float32))
        result = runner.invoke(
            main,
            ["warp", "--feature", str(tmp_path / "x.bin"), "--flow", str(tmp_path / "zero.flo"),
             "--out", str(tmp_path / "out.bin")],
        )
        assert result.exit_code == 0, result.output
        assert np.array_equal(read_tensor(tmp_path / "out.bin"), x)

    def test_pyramid_manifest(self, runner, tmp_path):
        from flowface.tensorio import read_tensor, write_tensor

        write_tensor(tmp_path / "d.bin", np.full((1, 4, 4), 1.0))
        write_tensor(tmp_path / "i.bin", np.full((1, 4, 4), 0.25))
        manifest = tmp_path / "levels.json"
        manifest.write_text(
            json.dumps(
                {"levels": [{"decoded": str(tmp_path / "d.bin"),
                             "inpainted": str(tmp_path / "i.bin")}]}
            )
        )
        result = runner.invoke(
            main,
            ["warp", "--pyramid", str(manifest), "--out", str(tmp_path / "out.bin")],
        )
        assert result.exit_code == 0, result.output
        np.testing.assert_allclose(read_tensor(tmp_path / "out.bin"), 1.25)

    def test_beta_parsing_error(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["warp", "--feature", "x", "--flow", "y", "--beta", "1,zz", "--out", "o"],
        )
        assert result.exit_code != 0
        assert "--beta" in result.output

    def test_requires_feature_and_flow(self, runner):
        result = runner.invoke(main, ["warp", "--out", "o.bin"])
        assert result.exit_code != 0
        assert "--feature" in result.output


class TestLossCommand:
    def test_report_on_identical_dirs(self, runner, rng, tmp_path):
        from flowface.rgbd import DepthRaster, save_depth

        frames = tmp_path / "frames"
        frames.mkdir()
        save_depth(
            frames / "depth_00000.png",
            DepthRaster(
                values=rng.uniform(-0.9, 0.9, size=(8, 8)).astype(np.float32),
                valid=np.ones((8, 8), bool),
            ),
            500.0,
            5000.0,
        )
        out = tmp_path / "report.json"
        result = runner.invoke(
            main,
            ["loss", "--pred", str(frames), "--target", str(frames),
             "--near", "500", "--far", "5000", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert json.loads(out.read_text())["summary"]["combined"]["mean"] == 0.0
