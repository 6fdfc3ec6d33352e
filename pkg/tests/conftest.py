"""Shared synthetic scenes and mock fixtures for the test suite.

The tower scene mirrors the canonical demo: a gray tower touching the left
and bottom frame edges, partially hidden by a green tree, on a sky-blue
background. Chroma segmentation picks the tower/tree apart by color and the
reasoning replies are canned per message digest.
"""
from __future__ import annotations

import numpy as np
import pytest

from amodalkit import agents
from amodalkit.backends import MockInpainting, MockReasoning, MockSegmentation, message_digest
from amodalkit.config import BackendConfig, Backends, PipelineConfig
from amodalkit.masks import BinaryMask, bbox, edges_touched

SKY = (180, 210, 235)
TOWER_GRAY = (128, 128, 128)
TREE_GREEN = (34, 139, 34)
BALL_RED = (200, 40, 40)

TOWER_REPLY_OCCLUSION = '{"target": "clock tower", "occluders": ["trees"]}'
TOWER_REPLY_BOUNDARY = (
    '{"truncated": true, '
    '"expansion": {"left": 0.5, "right": 0, "top": 0, "bottom": 0.5}, '
    '"rationale": "the tower continues past the left and bottom frame edges"}'
)
TOWER_REPLY_DESCRIPTION = (
    '{"description": "A tall stone clock tower with a pale round clock face, '
    'weathered gray masonry, and a pointed copper roof rising to a narrow spire."}'
)

BALL_REPLY_OCCLUSION = '{"target": "red ball", "occluders": []}'
BALL_REPLY_BOUNDARY = (
    '{"truncated": false, "expansion": {"left": 0, "right": 0, "top": 0, "bottom": 0}, '
    '"rationale": "the ball sits fully inside the frame"}'
)
BALL_REPLY_DESCRIPTION = '{"description": "A smooth matte red rubber ball with a soft highlight."}'


def tower_image() -> np.ndarray:
    img = np.empty((100, 100, 3), dtype=np.uint8)
    img[:] = SKY
    img[40:100, 0:29] = TOWER_GRAY  # tower touches left + bottom edges
    img[30:70, 12:41] = TREE_GREEN  # tree drawn over the tower's upper right
    return img


def ball_image() -> np.ndarray:
    img = np.full((64, 64, 3), 255, dtype=np.uint8)
    yy, xx = np.mgrid[0:64, 0:64]
    img[(yy - 32) ** 2 + (xx - 32) ** 2 <= 14 ** 2] = BALL_RED
    return img


def chroma_segmentation() -> MockSegmentation:
    return MockSegmentation(
        chroma_colors={
            "clock tower": TOWER_GRAY,
            "trees": TREE_GREEN,
            "red ball": BALL_RED,
        },
        chroma_distance=30.0,
    )


def reasoning_fixtures(cfg: PipelineConfig | None = None) -> dict[str, str]:
    """Canned replies keyed by the digests the pipeline will actually produce."""
    cfg = cfg or PipelineConfig()
    fixtures: dict[str, str] = {}

    tower_q = agents.TaskQuery(tower_image(), "the clock tower")
    seg = chroma_segmentation()
    visible, _ = seg.segment(tower_q.image, "clock tower")
    box = bbox(visible)
    touched = edges_touched(box, 100, 100, cfg.edge_tolerance)
    fixtures[message_digest(agents.build_occlusion_prompt(tower_q))] = TOWER_REPLY_OCCLUSION
    fixtures[message_digest(agents.build_boundary_prompt(tower_q, touched, box))] = (
        TOWER_REPLY_BOUNDARY
    )
    fixtures[message_digest(agents.build_boundary_prompt(tower_q, None, None))] = (
        TOWER_REPLY_BOUNDARY
    )
    fixtures[message_digest(agents.build_description_prompt(tower_q))] = TOWER_REPLY_DESCRIPTION

    ball_q = agents.TaskQuery(ball_image(), "the red ball")
    ball_visible, _ = seg.segment(ball_q.image, "red ball")
    ball_box = bbox(ball_visible)
    ball_touched = edges_touched(ball_box, 64, 64, cfg.edge_tolerance)
    fixtures[message_digest(agents.build_occlusion_prompt(ball_q))] = BALL_REPLY_OCCLUSION
    fixtures[message_digest(agents.build_boundary_prompt(ball_q, ball_touched, ball_box))] = (
        BALL_REPLY_BOUNDARY
    )
    fixtures[message_digest(agents.build_description_prompt(ball_q))] = BALL_REPLY_DESCRIPTION
    return fixtures


def mock_backends(cfg: PipelineConfig | None = None, extra_fixtures: dict | None = None) -> Backends:
    fixtures = reasoning_fixtures(cfg)
    if extra_fixtures:
        fixtures.update(extra_fixtures)
    return Backends(
        reasoning=MockReasoning(fixtures, strict=True),
        segmentation=chroma_segmentation(),
        inpainting=MockInpainting(),
        metrics=None,
    )


@pytest.fixture
def tower_query() -> agents.TaskQuery:
    return agents.TaskQuery(tower_image(), "the clock tower")


@pytest.fixture
def ball_query() -> agents.TaskQuery:
    return agents.TaskQuery(ball_image(), "the red ball")


@pytest.fixture
def pipeline_cfg() -> PipelineConfig:
    return PipelineConfig()


@pytest.fixture
def backends(pipeline_cfg) -> Backends:
    return mock_backends(pipeline_cfg)


def random_mask(rng: np.random.Generator, width: int, height: int, density: float = 0.1) -> BinaryMask:
    return BinaryMask(rng.random((height, width)) < density)
