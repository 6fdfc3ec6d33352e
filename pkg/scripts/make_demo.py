#!/usr/bin/env python3
"""Build a self-contained mock-mode demo workspace for the CLI.

Writes a synthetic scene (a gray tower truncated by the left/bottom frame
edges and partly hidden behind a green tree), the canned reasoning replies
keyed by prompt digest, a pipeline config wiring the mock backends together,
and a one-case benchmark manifest.

Usage: python3 scripts/make_demo.py demo/
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from amodalkit import agents
from amodalkit.backends import MockSegmentation, message_digest
from amodalkit.imaging import save_png
from amodalkit.masks import bbox, edges_touched

SKY = (180, 210, 235)
TOWER = (128, 128, 128)
TREE = (34, 139, 34)

OCCLUSION_REPLY = '{"target": "clock tower", "occluders": ["trees"]}'
BOUNDARY_REPLY = (
    '{"truncated": true, '
    '"expansion": {"left": 0.5, "right": 0, "top": 0, "bottom": 0.5}, '
    '"rationale": "the tower continues past the left and bottom frame edges"}'
)
DESCRIPTION_REPLY = (
    '{"description": "A tall stone clock tower with a pale round clock face, '
    'weathered gray masonry, and a pointed copper roof rising to a narrow spire."}'
)


def tower_scene() -> np.ndarray:
    img = np.empty((100, 100, 3), dtype=np.uint8)
    img[:] = SKY
    img[40:100, 0:29] = TOWER
    img[30:70, 12:41] = TREE
    return img


def main() -> int:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo")
    out.mkdir(parents=True, exist_ok=True)

    image = tower_scene()
    scene_path = out / "tower.png"
    save_png(image, scene_path)

    # the mock reasoning backend replays replies keyed by the digest of the
    # exact message list the pipeline will send, so build those prompts here
    query = agents.TaskQuery(image, "the clock tower")
    seg = MockSegmentation(
        chroma_colors={"clock tower": TOWER, "trees": TREE}, chroma_distance=30.0
    )
    visible, _ = seg.segment(image, "clock tower")
    box = bbox(visible)
    touched = edges_touched(box, 100, 100, tol=2)
    fixtures = {
        message_digest(agents.build_occlusion_prompt(query)): OCCLUSION_REPLY,
        message_digest(agents.build_boundary_prompt(query, touched, box)): BOUNDARY_REPLY,
        message_digest(agents.build_description_prompt(query)): DESCRIPTION_REPLY,
    }
    fixtures_path = out / "fixtures.json"
    fixtures_path.write_text(json.dumps(fixtures, indent=2), encoding="utf-8")

    config_path = out / "config.json"
    config_path.write_text(
        json.dumps(
            {
                "backends": {
                    "mode": "mock",
                    "metrics_mode": "mock",
                    "reasoning_fixtures": str(fixtures_path),
                    "chroma_colors": {"clock tower": list(TOWER), "trees": list(TREE)},
                    "chroma_distance": 30.0,
                }
            },
            indent=2,
        ),
        encoding="utf-8",
    )

    manifest_path = out / "manifest.jsonl"
    manifest_path.write_text(
        json.dumps({"image": str(scene_path), "query": "the clock tower"}) + "\n",
        encoding="utf-8",
    )

    print(f"demo workspace ready under {out}/")
    print(f"  amodalkit complete {scene_path} \"the clock tower\" "
          f"--config {config_path} --out {out / 'tower_rgba.png'} --dump-intermediates")
    print(f"  amodalkit inspect-mask {scene_path} \"the clock tower\" "
          f"--config {config_path} --out-dir {out / 'inspect'}")
    print(f"  amodalkit eval {manifest_path} --config {config_path} --out-dir {out / 'reports'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
