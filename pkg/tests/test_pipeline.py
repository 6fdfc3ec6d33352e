"""Orchestrator tests on the synthetic tower/ball scenes with mock backends."""
from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from amodalkit import agents
from amodalkit.backends import MockInpainting, MockReasoning, message_digest
from amodalkit.config import Backends, PipelineConfig
from amodalkit.masks import Edge, bbox, edges_touched
from amodalkit.pipeline import PipelineStageError, analyze_spatial, run_pipeline

from conftest import (
    TOWER_REPLY_DESCRIPTION,
    TOWER_REPLY_OCCLUSION,
    chroma_segmentation,
    mock_backends,
    reasoning_fixtures,
    tower_image,
)

TOWER_DESCRIPTION_TEXT = (
    "A tall stone clock tower with a pale round clock face, weathered gray masonry, "
    "and a pointed copper roof rising to a narrow spire."
)


class TestTowerRun:
    def test_full_run_shapes_and_findings(self, tower_query, pipeline_cfg, backends):
        result = run_pipeline(tower_query, pipeline_cfg, backends)
        assert result.occlusion.target_label == "clock tower"
        assert result.occlusion.occluder_labels == ("trees",)
        assert result.boundary.expansion.left == 0.5 and result.boundary.expansion.bottom == 0.5
        assert result.prompt.prompt_text == TOWER_DESCRIPTION_TEXT
        p = result.placement
        assert (p.new_width, p.new_height, p.offset_x, p.offset_y) == (150, 150, 50, 0)
        assert result.rgba.shape == (150, 150, 4)
        assert not result.degenerate

    def test_exactly_one_inpainting_call(self, tower_query, pipeline_cfg, backends):
        run_pipeline(tower_query, pipeline_cfg, backends)
        assert backends.inpainting.calls == 1

    def test_masked_input_preserves_visible_evidence(self, tower_query, pipeline_cfg, backends):
        result = run_pipeline(tower_query, pipeline_cfg, backends)
        placed = result.visible_mask_canvas.data
        original_region = result.masked_input[placed]
        # visible tower pixels carry their original gray through the canvas
        assert (original_region == np.array([128, 128, 128], np.uint8)).all()
        # completed image never modifies mask-false pixels
        off = ~result.inpaint_mask.data
        assert np.array_equal(result.completed[off], result.masked_input[off])

    def test_alpha_covers_visible_with_fusion(self, tower_query, pipeline_cfg, backends):
        result = run_pipeline(tower_query, pipeline_cfg, backends)
        core = result.visible_mask_canvas
        missing = core.data & ~result.alpha.data
        assert missing.sum() == 0

    def test_bit_deterministic_across_runs(self, tower_query, pipeline_cfg):
        first = run_pipeline(tower_query, pipeline_cfg, mock_backends(pipeline_cfg))
        second = run_pipeline(tower_query, pipeline_cfg, mock_backends(pipeline_cfg))
        assert np.array_equal(first.rgba, second.rgba)
        assert first.inpaint_mask == second.inpaint_mask
        assert np.array_equal(first.masked_input, second.masked_input)
        assert np.array_equal(first.completed, second.completed)
        assert first.alpha == second.alpha

    def test_trace_stage_order(self, tower_query, pipeline_cfg, backends):
        result = run_pipeline(tower_query, pipeline_cfg, backends)
        stages = [r["stage"] for r in result.trace]
        assert stages == [
            "occlusion-agent",
            "segmentation",
            "boundary-agent",
            "description-agent",
            "canvas",
            "input-prep",
            "inpainting",
            "alpha",
        ]
        assert all("seconds" in r for r in result.trace)

    def test_sequential_agents_equal_parallel(self, tower_query, pipeline_cfg):
        sequential_cfg = dataclasses.replace(pipeline_cfg, parallel_agents=False)
        a = run_pipeline(tower_query, pipeline_cfg, mock_backends(pipeline_cfg))
        b = run_pipeline(tower_query, sequential_cfg, mock_backends(sequential_cfg))
        assert np.array_equal(a.rgba, b.rgba)


class TestDegenerateRun:
    def test_pass_through(self, ball_query, pipeline_cfg, backends):
        result = run_pipeline(ball_query, pipeline_cfg, backends)
        assert result.degenerate
        assert result.inpaint_mask.is_empty()
        assert backends.inpainting.calls == 0
        assert np.array_equal(result.completed, result.masked_input)
        assert result.alpha == result.visible_mask  # identity placement
        assert result.placement.is_identity()
        assert result.attention is None

    def test_rgba_alpha_equals_visible(self, ball_query, pipeline_cfg, backends):
        result = run_pipeline(ball_query, pipeline_cfg, backends)
        assert np.array_equal(result.rgba[..., 3] == 255, result.visible_mask.data)


class TestSingleAgent:
    COMBINED_REPLY = (
        '{"target": "clock tower", "occluders": ["trees"], "truncated": true, '
        '"expansion": {"left": 0.5, "right": 0, "top": 0, "bottom": 0.5}, '
        f'"description": "{TOWER_DESCRIPTION_TEXT}"}}'
    )

    def _backends(self, cfg):
        q = agents.TaskQuery(tower_image(), "the clock tower")
        fixtures = {
            message_digest(agents.build_single_agent_prompt(q)): self.COMBINED_REPLY,
        }
        return mock_backends(cfg, extra_fixtures=fixtures)

    def test_one_call_three_findings(self, tower_query, pipeline_cfg):
        cfg = dataclasses.replace(pipeline_cfg, single_agent=True)
        backends = self._backends(cfg)
        result = run_pipeline(tower_query, cfg, backends)
        assert result.occlusion.occluder_labels == ("trees",)
        assert result.boundary.expansion.left == 0.5
        assert result.prompt.prompt_text == TOWER_DESCRIPTION_TEXT
        assert len(backends.reasoning.calls) == 1
        stages = [r["stage"] for r in result.trace]
        assert stages[0] == "single-agent"
        assert "boundary-agent" not in stages and "description-agent" not in stages

    def test_same_canvas_as_multi_agent(self, tower_query, pipeline_cfg):
        cfg = dataclasses.replace(pipeline_cfg, single_agent=True)
        single = run_pipeline(tower_query, cfg, self._backends(cfg))
        multi = run_pipeline(tower_query, pipeline_cfg, mock_backends(pipeline_cfg))
        assert single.placement == multi.placement
        assert single.inpaint_mask == multi.inpaint_mask


class TestRetries:
    def _retry_fixtures(self, first_reply: str) -> dict:
        q = agents.TaskQuery(tower_image(), "the clock tower")
        messages = agents.build_occlusion_prompt(q)
        fixtures = {message_digest(messages): first_reply}
        try:
            agents.parse_occlusion_response(first_reply)
            return fixtures
        except agents.AgentParseError as exc:
            correction = messages + [
                {"role": "assistant", "content": first_reply},
                {
                    "role": "user",
                    "content": f"Your previous reply was rejected: {exc}. "
                    "Reply again with only the JSON object in the required schema.",
                },
            ]
            fixtures[message_digest(correction)] = TOWER_REPLY_OCCLUSION
        return fixtures

    def test_parse_error_retried_with_appended_context(self, tower_query, pipeline_cfg):
        backends = mock_backends(
            pipeline_cfg, extra_fixtures=self._retry_fixtures("sorry, I refuse to answer")
        )
        result = run_pipeline(tower_query, pipeline_cfg, backends)
        assert result.occlusion.target_label == "clock tower"
        occlusion_record = result.trace[0]
        assert occlusion_record["attempts"] == 2
        assert len(occlusion_record["transcripts"]) == 2

    def test_exhausted_retries_abort_with_stage(self, tower_query, pipeline_cfg):
        cfg = dataclasses.replace(pipeline_cfg, max_retries=0)
        q = agents.TaskQuery(tower_image(), "the clock tower")
        fixtures = reasoning_fixtures(cfg)
        fixtures[message_digest(agents.build_occlusion_prompt(q))] = "still not json"
        backends = Backends(
            reasoning=MockReasoning(fixtures),
            segmentation=chroma_segmentation(),
            inpainting=MockInpainting(),
        )
        with pytest.raises(PipelineStageError) as err:
            run_pipeline(tower_query, cfg, backends)
        assert err.value.stage == "occlusion-agent"


class TestStageErrors:
    def test_unknown_occluder_label_aborts_in_segmentation(self, tower_query, pipeline_cfg):
        q = tower_query
        fixtures = reasoning_fixtures(pipeline_cfg)
        fixtures[message_digest(agents.build_occlusion_prompt(q))] = (
            '{"target": "clock tower", "occluders": ["flying saucer"]}'
        )
        backends = Backends(
            reasoning=MockReasoning(fixtures),
            segmentation=chroma_segmentation(),
            inpainting=MockInpainting(),
        )
        with pytest.raises(PipelineStageError) as err:
            run_pipeline(q, pipeline_cfg, backends)
        assert err.value.stage == "segmentation"

    def test_empty_visible_mask_aborts(self, pipeline_cfg):
        image = np.full((50, 50, 3), 255, dtype=np.uint8)  # nothing tower-gray anywhere
        q = agents.TaskQuery(image, "the clock tower")
        fixtures = {
            message_digest(agents.build_occlusion_prompt(q)): TOWER_REPLY_OCCLUSION,
        }
        backends = Backends(
            reasoning=MockReasoning(fixtures),
            segmentation=chroma_segmentation(),
            inpainting=MockInpainting(),
        )
        with pytest.raises(PipelineStageError) as err:
            run_pipeline(q, pipeline_cfg, backends)
        assert err.value.stage == "segmentation"
        assert "empty visible mask" in str(err.value)


class TestProvidedVisibleMask:
    def test_precomputed_mask_skips_target_segmentation(self, tower_query, pipeline_cfg, backends):
        seg = chroma_segmentation()
        visible, _ = seg.segment(tower_query.image, "clock tower")
        result = run_pipeline(tower_query, pipeline_cfg, backends, visible_mask=visible)
        assert result.visible_mask == visible


class TestBoundaryStrategies:
    def test_hybrid_uses_agent_proportions(self, tower_query, pipeline_cfg, backends):
        analysis = analyze_spatial(tower_query, pipeline_cfg, backends)
        assert analysis.proportions_known
        assert analysis.boundary.expansion.left == 0.5
        assert analysis.touched == frozenset({Edge.LEFT, Edge.BOTTOM})

    def test_bbox_only_gives_directions_without_proportions(self, tower_query, pipeline_cfg):
        cfg = dataclasses.replace(pipeline_cfg, boundary_strategy="bbox-only")
        backends = mock_backends(cfg)
        analysis = analyze_spatial(tower_query, cfg, backends)
        assert not analysis.proportions_known
        assert analysis.boundary.truncated
        assert analysis.boundary.expansion.is_zero()
        # only the occlusion agent was consulted
        assert len(backends.reasoning.calls) == 1

    def test_agent_only_prompts_without_bbox(self, tower_query, pipeline_cfg):
        cfg = dataclasses.replace(pipeline_cfg, boundary_strategy="agent-only")
        backends = mock_backends(cfg)
        analysis = analyze_spatial(tower_query, cfg, backends)
        assert analysis.proportions_known
        assert analysis.boundary.expansion.bottom == 0.5
        image_only = message_digest(agents.build_boundary_prompt(tower_query, None, None))
        assert image_only in backends.reasoning.calls


class TestExpansionInterpretation:
    def test_fractions_relative_to_original_dims(self, pipeline_cfg):
        # a 200x100 image with right expansion 0.1 grows by 20 columns
        img = np.full((100, 200, 3), 255, dtype=np.uint8)
        img[40:60, 150:200] = (128, 128, 128)
        q = agents.TaskQuery(img, "the clock tower")
        seg = chroma_segmentation()
        visible, _ = seg.segment(img, "clock tower")
        box = bbox(visible)
        touched = edges_touched(box, 200, 100, pipeline_cfg.edge_tolerance)
        fixtures = {
            message_digest(agents.build_occlusion_prompt(q)): (
                '{"target": "clock tower", "occluders": []}'
            ),
            message_digest(agents.build_boundary_prompt(q, touched, box)): (
                '{"truncated": true, "expansion": {"right": 0.1}}'
            ),
            message_digest(agents.build_description_prompt(q)): TOWER_REPLY_DESCRIPTION,
        }
        backends = Backends(
            reasoning=MockReasoning(fixtures),
            segmentation=seg,
            inpainting=MockInpainting(),
        )
        result = run_pipeline(q, pipeline_cfg, backends)
        assert result.placement.new_width == 220
        assert result.placement.offset_x == 0
