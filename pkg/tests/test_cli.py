"""End-to-end CLI tests in mock mode."""
from __future__ import annotations

import json

import numpy as np
import pytest
from PIL import Image

from amodalkit import cli
from amodalkit.imaging import save_png
from amodalkit.masks import mask_from_png

from conftest import ball_image, reasoning_fixtures, tower_image, TOWER_GRAY, TREE_GREEN, BALL_RED


def write_workspace(tmp_path):
    """Scene PNGs, mock fixtures, and a config file wired together."""
    scene = tmp_path / "tower.png"
    ball = tmp_path / "ball.png"
    save_png(tower_image(), scene)
    save_png(ball_image(), ball)
    fixtures_path = tmp_path / "fixtures.json"
    fixtures_path.write_text(json.dumps(reasoning_fixtures()), encoding="utf-8")
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps(
            {
                "backends": {
                    "mode": "mock",
                    "reasoning_fixtures": str(fixtures_path),
                    "chroma_colors": {
                        "clock tower": list(TOWER_GRAY),
                        "trees": list(TREE_GREEN),
                        "red ball": list(BALL_RED),
                    },
                    "chroma_distance": 30.0,
                }
            }
        ),
        encoding="utf-8",
    )
    return scene, ball, config_path


class TestComplete:
    def test_writes_rgba(self, tmp_path):
        scene, _, config = write_workspace(tmp_path)
        out = tmp_path / "out.png"
        code = cli.main(
            ["complete", str(scene), "the clock tower", "--out", str(out), "--config", str(config)]
        )
        assert code == 0
        img = Image.open(out)
        assert img.mode == "RGBA"
        assert img.size == (150, 150)

    def test_byte_identical_across_invocations(self, tmp_path):
        scene, _, config = write_workspace(tmp_path)
        outs = []
        for name in ("a.png", "b.png"):
            out = tmp_path / name
            assert (
                cli.main(
                    [
                        "complete",
                        str(scene),
                        "the clock tower",
                        "--out",
                        str(out),
                        "--config",
                        str(config),
                    ]
                )
                == 0
            )
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_missing_image_exit_2(self, tmp_path):
        _, _, config = write_workspace(tmp_path)
        code = cli.main(
            [
                "complete",
                str(tmp_path / "nope.png"),
                "x",
                "--out",
                str(tmp_path / "o.png"),
                "--config",
                str(config),
            ]
        )
        assert code == 2

    def test_bad_config_exit_2(self, tmp_path):
        scene, _, _ = write_workspace(tmp_path)
        bad = tmp_path / "bad.json"
        bad.write_text('{"no_such_option": 1}')
        code = cli.main(
            ["complete", str(scene), "x", "--out", str(tmp_path / "o.png"), "--config", str(bad)]
        )
        assert code == 2

    def test_unknown_fixture_is_pipeline_failure(self, tmp_path):
        scene, _, config = write_workspace(tmp_path)
        code = cli.main(
            [
                "complete",
                str(scene),
                "an unregistered query",
                "--out",
                str(tmp_path / "o.png"),
                "--config",
                str(config),
            ]
        )
        assert code == 1

    def test_dump_intermediates(self, tmp_path):
        scene, _, config = write_workspace(tmp_path)
        out = tmp_path / "result.png"
        code = cli.main(
            [
                "complete",
                str(scene),
                "the clock tower",
                "--out",
                str(out),
                "--config",
                str(config),
                "--dump-intermediates",
            ]
        )
        assert code == 0
        dump = tmp_path / "result_intermediates"
        for name in (
            "visible_mask.png",
            "visible_mask_canvas.png",
            "occluder_00.png",
            "inpaint_mask.png",
            "alpha.png",
            "masked_input.png",
            "completed.png",
            "prompt.txt",
            "attention.png",
        ):
            assert (dump / name).is_file(), name
        assert "clock tower" in (dump / "prompt.txt").read_text()

    def test_fusion_ablation_produces_incomplete_alpha(self, tmp_path):
        scene, _, config = write_workspace(tmp_path)

        def run(flag_dir, extra):
            out = tmp_path / flag_dir / "out.png"
            out.parent.mkdir()
            args = [
                "complete",
                str(scene),
                "the clock tower",
                "--out",
                str(out),
                "--config",
                str(config),
                "--dump-intermediates",
            ] + extra
            assert cli.main(args) == 0
            dump = out.parent / "out_intermediates"
            return mask_from_png(dump / "alpha.png"), mask_from_png(dump / "visible_mask_canvas.png")

        fused_alpha, visible = run("fused", [])
        ablated_alpha, _ = run("ablated", ["--no-fuse-visible"])
        assert (visible.data & ~fused_alpha.data).sum() == 0
        assert (visible.data & ~ablated_alpha.data).sum() >= 1


class TestEval:
    def _manifest(self, tmp_path, cases):
        path = tmp_path / "manifest.jsonl"
        path.write_text("\n".join(json.dumps(c) for c in cases) + "\n", encoding="utf-8")
        return path

    def test_two_case_eval(self, tmp_path):
        scene, ball, config = write_workspace(tmp_path)
        manifest = self._manifest(
            tmp_path,
            [
                {"image": str(scene), "query": "the clock tower"},
                {"image": str(ball), "query": "the red ball"},
            ],
        )
        out_dir = tmp_path / "reports"
        code = cli.main(
            ["eval", str(manifest), "--out-dir", str(out_dir), "--config", str(config)]
        )
        assert code == 0
        assert (out_dir / "report.json").is_file()
        assert (out_dir / "report.csv").is_file()
        header = (out_dir / "report.csv").read_text().splitlines()[0]
        assert header == "case,clip,lpips,feature_sim,ssim,runtime_s"

    def test_corrupt_manifest_exit_2(self, tmp_path):
        _, _, config = write_workspace(tmp_path)
        manifest = tmp_path / "manifest.jsonl"
        manifest.write_text('{"image": "a.png", "query": "x"}\n{oops\n')
        code = cli.main(
            ["eval", str(manifest), "--out-dir", str(tmp_path / "r"), "--config", str(config)]
        )
        assert code == 2

    def test_failures_gate_exit_code(self, tmp_path):
        scene, ball, config = write_workspace(tmp_path)
        blank = tmp_path / "blank.png"
        save_png(np.full((40, 40, 3), 255, dtype=np.uint8), blank)
        manifest = self._manifest(
            tmp_path,
            [
                {"image": str(ball), "query": "the red ball"},
                {"image": str(blank), "query": "the clock tower"},
            ],
        )
        code = cli.main(
            ["eval", str(manifest), "--out-dir", str(tmp_path / "r1"), "--config", str(config)]
        )
        assert code == 1
        code = cli.main(
            [
                "eval",
                str(manifest),
                "--out-dir",
                str(tmp_path / "r2"),
                "--config",
                str(config),
                "--allow-failures",
            ]
        )
        assert code == 0
        report = json.loads((tmp_path / "r2" / "report.json").read_text())
        assert report["aggregates"]["failures"] == 1


class TestInspectMask:
    def test_hybrid_emits_directions_and_proportions(self, tmp_path, capsys):
        scene, _, config = write_workspace(tmp_path)
        code = cli.main(
            [
                "inspect-mask",
                str(scene),
                "the clock tower",
                "--out-dir",
                str(tmp_path / "inspect"),
                "--config",
                str(config),
            ]
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["strategy"] == "hybrid"
        assert summary["directions"] == ["left", "bottom"]
        assert summary["proportions"]["left"] == 0.5
        assert summary["proportions"]["bottom"] == 0.5
        assert (tmp_path / "inspect" / "visible_mask.png").is_file()
        assert (tmp_path / "inspect" / "inpaint_mask.png").is_file()

    def test_bbox_only_has_no_proportions(self, tmp_path, capsys):
        scene, _, config = write_workspace(tmp_path)
        code = cli.main(
            [
                "inspect-mask",
                str(scene),
                "the clock tower",
                "--out-dir",
                str(tmp_path / "inspect"),
                "--config",
                str(config),
                "--boundary-strategy",
                "bbox-only",
            ]
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["proportions"] is None
        assert summary["directions"] == ["left", "bottom"]
        assert summary["truncated"] is True

    def test_centered_object_zero_expansion(self, tmp_path, capsys):
        _, ball, config = write_workspace(tmp_path)
        code = cli.main(
            [
                "inspect-mask",
                str(ball),
                "the red ball",
                "--out-dir",
                str(tmp_path / "inspect"),
                "--config",
                str(config),
            ]
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["directions"] == []
        assert summary["truncated"] is False
        assert summary["touched_edges"] == []


class TestFlagOverrides:
    def test_flag_wins_over_config(self, tmp_path):
        scene, _, config = write_workspace(tmp_path)
        # config says protect_visible default True; flag flips it off; the
        # inpaint mask must then overlap the visible mask (tree dilation spills in)
        out = tmp_path / "o.png"
        code = cli.main(
            [
                "complete",
                str(scene),
                "the clock tower",
                "--out",
                str(out),
                "--config",
                str(config),
                "--dump-intermediates",
                "--no-protect-visible",
            ]
        )
        assert code == 0
        dump = tmp_path / "o_intermediates"
        inpaint = mask_from_png(dump / "inpaint_mask.png")
        visible = mask_from_png(dump / "visible_mask_canvas.png")
        assert (inpaint.data & visible.data).sum() > 0

    def test_usage_error_on_bad_flag_value(self, tmp_path):
        scene, _, config = write_workspace(tmp_path)
        with pytest.raises(SystemExit) as err:
            cli.main(
                [
                    "complete",
                    str(scene),
                    "x",
                    "--out",
                    str(tmp_path / "o.png"),
                    "--boundary-strategy",
                    "nonsense",
                ]
            )
        assert err.value.code == 2
