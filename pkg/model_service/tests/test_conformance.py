"""Protocol conformance: fixture dumps, schema validation, and the client
package talking to a live stub service (no real models anywhere)."""
from __future__ import annotations

import base64
import json
import threading
import time

import jsonschema
import numpy as np
import pytest
import uvicorn

from amodalkit.backends import (
    HttpInpaintingClient,
    HttpMetricsClient,
    HttpSegmentationClient,
    InpaintParams,
    decode_inpaint_response,
    decode_metrics_response,
    decode_segment_response,
    load_schema,
)
from amodalkit.imaging import image_from_png_bytes
from amodalkit.masks import BinaryMask, mask_from_png_bytes

from model_service import ServiceConfig, conformance_fixture_dump, create_app
from model_service.conformance import ENDPOINTS


@pytest.fixture(scope="module")
def dump_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("conformance")
    conformance_fixture_dump(out)
    return out


class TestFixtureDump:
    def test_one_pair_per_endpoint(self, dump_dir):
        for endpoint in ENDPOINTS:
            assert (dump_dir / f"{endpoint}_request.json").is_file()
            assert (dump_dir / f"{endpoint}_response.json").is_file()

    def test_pairs_revalidate_against_schemas(self, dump_dir):
        for endpoint in ENDPOINTS:
            request = json.loads((dump_dir / f"{endpoint}_request.json").read_text())
            response = json.loads((dump_dir / f"{endpoint}_response.json").read_text())
            jsonschema.validate(request, load_schema(f"{endpoint}_request"))
            jsonschema.validate(response, load_schema(f"{endpoint}_response"))

    def test_attention_blob_length_law(self, dump_dir):
        response = json.loads((dump_dir / "inpaint_response.json").read_text())
        attention = response["attention"]
        blob = base64.b64decode(attention["cross_f32_b64"])
        assert len(blob) == attention["latent_w"] * attention["latent_h"] * 4
        values = np.frombuffer(blob, dtype="<f4")
        assert values.min() >= 0.0 and values.max() <= 1.0

    def test_metrics_identity_laws_recorded(self, dump_dir):
        # the canned metrics request compares an image with itself
        response = json.loads((dump_dir / "metrics_response.json").read_text())
        assert response["lpips"] == 0.0
        assert response["feature_sim"] == 1.0

    def test_primary_decoders_accept_fixture_responses(self, dump_dir):
        """The client package parses the dumped responses with no service running."""
        seg_req = json.loads((dump_dir / "segment_request.json").read_text())
        seg_resp = json.loads((dump_dir / "segment_response.json").read_text())
        image = image_from_png_bytes(base64.b64decode(seg_req["image_png_b64"]))
        mask, confidence = decode_segment_response(seg_resp, image.shape[:2])
        assert mask.data.shape == image.shape[:2]
        assert 0.0 <= confidence <= 1.0

        inp_req = json.loads((dump_dir / "inpaint_request.json").read_text())
        inp_resp = json.loads((dump_dir / "inpaint_response.json").read_text())
        image = image_from_png_bytes(base64.b64decode(inp_req["image_png_b64"]))
        mask = mask_from_png_bytes(base64.b64decode(inp_req["mask_png_b64"]))
        out, bundle = decode_inpaint_response(inp_resp, image, mask)
        assert out.shape == image.shape
        assert np.array_equal(out[~mask.data], image[~mask.data])
        assert bundle is not None and bundle.self_refined is not None

        met_resp = json.loads((dump_dir / "metrics_response.json").read_text())
        decode_metrics_response(met_resp)


@pytest.fixture(scope="module")
def live_service():
    config = uvicorn.Config(
        create_app(ServiceConfig()), host="127.0.0.1", port=0, log_level="warning"
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("service did not start")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


class TestPrimaryClientsAgainstLiveService:
    def _scene(self):
        image = np.full((40, 48, 3), 235, dtype=np.uint8)
        image[8:32, 10:30] = (70, 110, 190)
        mask = np.zeros((40, 48), dtype=bool)
        mask[12:28, 22:42] = True
        return image, BinaryMask(mask)

    def test_segmentation_client(self, live_service):
        image, _ = self._scene()
        client = HttpSegmentationClient(live_service, backoff_s=0.05)
        mask, confidence = client.segment(image, "blue box")
        assert mask.data.shape == image.shape[:2]
        assert mask.data[8:32, 10:30].all()
        assert 0.0 <= confidence <= 1.0

    def test_inpainting_client(self, live_service):
        image, mask = self._scene()
        client = HttpInpaintingClient(live_service, backoff_s=0.05)
        out, bundle = client.inpaint(
            image, mask, "a matte blue storage box", InpaintParams(steps=28, attn_last_n=15)
        )
        assert out.shape == image.shape
        assert np.array_equal(out[~mask.data], image[~mask.data])
        assert (bundle.latent_width, bundle.latent_height) == (6, 5)
        assert bundle.cross.max() <= 1.0

    def test_metrics_client(self, live_service):
        image, _ = self._scene()
        client = HttpMetricsClient(live_service, backoff_s=0.05)
        assert client.lpips(image, image) == 0.0
        assert client.feature_sim(image, image) == 1.0
        assert client.clip_score(image, "blue box") > 0.0
