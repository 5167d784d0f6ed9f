import io
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
import requests

from synapcount.detect import run_analysis
from synapcount.images import GrayImage, encode_png, load_png
from synapcount.report import render_region_overlay, report_to_dict
from synapcount.server import Session, SessionStore, create_server
from synapcount.traces import trace_length_px

from synthgen import make_neuron, ndf_text


@pytest.fixture(scope="module")
def server():
    httpd = create_server(port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}"
    httpd.shutdown()
    httpd.server_close()


def _tiff_bytes(img: GrayImage) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.asarray(img.pixels)).save(buf, format="TIFF")
    return buf.getvalue()


def _upload(base, neuron, traces_text=None, config=None):
    cfg = config or {
        "scale": neuron.config.scale,
        "thickness": neuron.config.thickness,
        "threshold_red": neuron.config.threshold_red,
        "threshold_green": neuron.config.threshold_green,
        "mode": neuron.config.mode,
    }
    files = {
        "red": ("red.tif", _tiff_bytes(neuron.red)),
        "green": ("green.tif", _tiff_bytes(neuron.green)),
        "traces": ("traces.ndf", traces_text or ndf_text(neuron.traces)),
        "config": ("config.json", json.dumps(cfg)),
    }
    return requests.post(base + "/session", files=files)


class TestHealth:
    def test_ok(self, server):
        resp = requests.get(server + "/health")
        assert resp.status_code == 200
        assert resp.text == "ok"

    def test_healthy_under_concurrent_load(self, server):
        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(lambda _: requests.get(server + "/health").status_code, range(32)))
        assert results == [200] * 32


class TestSessionUpload:
    def test_valid_upload_summarizes_dendrites(self, server):
        neuron = make_neuron(50)
        resp = _upload(server, neuron)
        assert resp.status_code == 200
        body = resp.json()
        assert body["width"] == neuron.red.width
        assert body["height"] == neuron.red.height
        assert len(body["dendrites"]) == len(neuron.traces.traces)
        first = neuron.traces.traces[0]
        assert body["dendrites"][0]["length_um"] == pytest.approx(
            trace_length_px(first) * neuron.config.scale
        )

    def test_mismatched_dimensions_rejected(self, server):
        neuron = make_neuron(51)
        small = GrayImage(8, 8, 8, np.zeros((8, 8), np.uint8))
        files = {
            "red": ("red.tif", _tiff_bytes(neuron.red)),
            "green": ("green.tif", _tiff_bytes(small)),
            "traces": ("traces.ndf", ndf_text(neuron.traces)),
            "config": ("config.json", json.dumps({"scale": 0.09, "thickness": 1.0})),
        }
        resp = requests.post(server + "/session", files=files)
        assert resp.status_code == 400
        assert "dimensions" in resp.json()["error"]

    def test_bogus_tiff_names_the_part(self, server):
        neuron = make_neuron(52)
        files = {
            "red": ("red.tif", b"this is not a tiff"),
            "green": ("green.tif", _tiff_bytes(neuron.green)),
            "traces": ("traces.ndf", ndf_text(neuron.traces)),
            "config": ("config.json", json.dumps({"scale": 0.09, "thickness": 1.0})),
        }
        resp = requests.post(server + "/session", files=files)
        assert resp.status_code == 400
        assert resp.json()["error"].startswith("red:")

    def test_missing_part_rejected(self, server):
        neuron = make_neuron(53)
        files = {
            "red": ("red.tif", _tiff_bytes(neuron.red)),
            "green": ("green.tif", _tiff_bytes(neuron.green)),
            "config": ("config.json", json.dumps({"scale": 0.09, "thickness": 1.0})),
        }
        resp = requests.post(server + "/session", files=files)
        assert resp.status_code == 400
        assert resp.json()["error"].startswith("traces:")

    def test_oversized_upload_gets_413(self):
        httpd = create_server(port=0, max_upload=1024)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        try:
            base = f"http://127.0.0.1:{httpd.server_address[1]}"
            resp = requests.post(
                base + "/session", files={"red": ("red.tif", b"x" * 10_000)}
            )
            assert resp.status_code == 413
        finally:
            httpd.shutdown()
            httpd.server_close()


class TestPreview:
    def test_zero_thresholds_highlight_whole_tube(self, server):
        neuron = make_neuron(54)
        sid = _upload(server, neuron).json()["id"]
        resp = requests.get(server + f"/session/{sid}/preview", params={"tr": 0, "tg": 0})
        assert resp.status_code == 200
        png = load_png(io.BytesIO(resp.content))
        red_pixels = (png.pixels == [255, 0, 0]).all(axis=2)
        detail = run_analysis(neuron.red, neuron.green, neuron.traces, neuron.config)
        assert np.array_equal(red_pixels, detail.region.bits)

    def test_max_thresholds_highlight_nothing(self, server):
        neuron = make_neuron(55)
        sid = _upload(server, neuron).json()["id"]
        resp = requests.get(server + f"/session/{sid}/preview", params={"tr": 255, "tg": 255})
        png = load_png(io.BytesIO(resp.content))
        assert not (png.pixels == [255, 0, 0]).all(axis=2).any()

    def test_same_thresholds_give_identical_bytes(self, server):
        neuron = make_neuron(56)
        sid = _upload(server, neuron).json()["id"]
        a = requests.get(server + f"/session/{sid}/preview", params={"tr": 90, "tg": 110})
        b = requests.get(server + f"/session/{sid}/preview", params={"tr": 90, "tg": 110})
        assert a.content == b.content

    def test_unknown_session_404(self, server):
        resp = requests.get(server + "/session/" + "0" * 32 + "/preview", params={"tr": 0, "tg": 0})
        assert resp.status_code == 404

    def test_out_of_range_threshold_400(self, server):
        neuron = make_neuron(57)
        sid = _upload(server, neuron).json()["id"]
        resp = requests.get(server + f"/session/{sid}/preview", params={"tr": 256, "tg": 0})
        assert resp.status_code == 400

    def test_highlighted_pixels_equal_analyze_candidates(self, server):
        neuron = make_neuron(58)
        sid = _upload(server, neuron).json()["id"]
        t_r, t_g = neuron.config.threshold_red, neuron.config.threshold_green
        resp = requests.get(server + f"/session/{sid}/preview", params={"tr": t_r, "tg": t_g})
        png = load_png(io.BytesIO(resp.content))
        highlighted = (png.pixels == [255, 0, 0]).all(axis=2)
        detail = run_analysis(neuron.red, neuron.green, neuron.traces, neuron.config)
        assert np.array_equal(highlighted, detail.candidates.bits)


class TestAnalyzeEndpoint:
    def test_planted_count_recovered(self, server):
        neuron = make_neuron(59, n_puncta=7)
        sid = _upload(server, neuron).json()["id"]
        resp = requests.post(server + f"/session/{sid}/analyze", json={})
        assert resp.status_code == 200
        assert resp.json()["global"]["synapse_count"] == neuron.planted_count

    def test_matches_headless_analysis_field_for_field(self, server):
        neuron = make_neuron(60)
        sid = _upload(server, neuron).json()["id"]
        resp = requests.post(
            server + f"/session/{sid}/analyze",
            json={"threshold_red": 100, "threshold_green": 140, "mode": "per-dendrite"},
        )
        from dataclasses import replace

        cfg = replace(neuron.config, threshold_red=100, threshold_green=140, mode="per-dendrite")
        detail = run_analysis(neuron.red, neuron.green, neuron.traces, cfg)
        expected = report_to_dict(detail.report)
        expected["centroids"] = [list(c.centroid) for c in detail.components.components]
        assert resp.json() == expected

    def test_per_dendrite_counts_partition_global(self, server):
        neuron = make_neuron(61)
        sid = _upload(server, neuron).json()["id"]
        body = requests.post(
            server + f"/session/{sid}/analyze", json={"mode": "per-dendrite"}
        ).json()
        assert sum(r["synapse_count"] for r in body["per_dendrite"]) == body["global"]["synapse_count"]

    def test_bad_body_400(self, server):
        neuron = make_neuron(62)
        sid = _upload(server, neuron).json()["id"]
        resp = requests.post(
            server + f"/session/{sid}/analyze",
            data="{broken",
            headers={"Content-Type": "application/json"},
        )
        assert resp.status_code == 400
        resp = requests.post(server + f"/session/{sid}/analyze", json={"zoom": 1})
        assert resp.status_code == 400

    def test_unknown_session_404(self, server):
        resp = requests.post(server + "/session/" + "1" * 32 + "/analyze", json={})
        assert resp.status_code == 404


class TestMarks:
    def test_zero_detections_leave_overlay_unchanged(self, server):
        neuron = make_neuron(63)
        sid = _upload(server, neuron).json()["id"]
        resp = requests.get(server + f"/session/{sid}/marks", params={"tr": 255, "tg": 255})
        detail = run_analysis(neuron.red, neuron.green, neuron.traces, neuron.config)
        base = render_region_overlay(neuron.red, neuron.green, detail.region)
        assert resp.content == encode_png(base)

    def test_crosses_at_planted_centers(self, server):
        neuron = make_neuron(64, n_puncta=7)
        sid = _upload(server, neuron).json()["id"]
        resp = requests.get(
            server + f"/session/{sid}/marks",
            params={"tr": neuron.config.threshold_red, "tg": neuron.config.threshold_green},
        )
        png = load_png(io.BytesIO(resp.content))
        # at a planted center the markers are bright, so pure blue means a cross
        for x, y in neuron.planted_centers:
            assert tuple(png.pixels[int(y), int(x)]) == (0, 0, 255), (x, y)

    def test_deterministic_bytes(self, server):
        neuron = make_neuron(65)
        sid = _upload(server, neuron).json()["id"]
        a = requests.get(server + f"/session/{sid}/marks", params={"tr": 120, "tg": 120})
        b = requests.get(server + f"/session/{sid}/marks", params={"tr": 120, "tg": 120})
        assert a.content == b.content


class TestSessionIsolationAndExpiry:
    def test_sessions_are_isolated(self, server):
        n1 = make_neuron(66, n_puncta=5)
        n2 = make_neuron(67, n_puncta=9)
        sid1 = _upload(server, n1).json()["id"]
        sid2 = _upload(server, n2).json()["id"]
        c1 = requests.post(server + f"/session/{sid1}/analyze", json={}).json()
        c2 = requests.post(server + f"/session/{sid2}/analyze", json={}).json()
        assert c1["global"]["synapse_count"] == n1.planted_count
        assert c2["global"]["synapse_count"] == n2.planted_count

    def test_store_expires_idle_sessions(self):
        store = SessionStore(ttl=0.05)
        neuron = make_neuron(68)
        detail = run_analysis(neuron.red, neuron.green, neuron.traces, neuron.config)
        session = Session(
            id="a" * 32,
            red=neuron.red,
            green=neuron.green,
            traces=neuron.traces,
            base_config=neuron.config,
            tubes=detail.tubes,
            region=detail.region,
            created_at=time.time(),
        )
        store.put(session)
        assert store.get("a" * 32) is session
        time.sleep(0.08)
        with pytest.raises(KeyError):
            store.get("a" * 32)


class TestCorsAndStatic:
    def test_cors_allowed_for_localhost_origin(self, server):
        resp = requests.get(server + "/health", headers={"Origin": "http://localhost:5173"})
        assert resp.headers.get("Access-Control-Allow-Origin") == "http://localhost:5173"

    def test_cors_not_reflected_for_other_origins(self, server):
        resp = requests.get(server + "/health", headers={"Origin": "http://evil.example"})
        assert "Access-Control-Allow-Origin" not in resp.headers

    def test_preflight(self, server):
        resp = requests.options(
            server + "/session", headers={"Origin": "http://127.0.0.1:5173"}
        )
        assert resp.status_code == 204
        assert resp.headers["Access-Control-Allow-Methods"] == "GET, POST, OPTIONS"

    def test_static_index_served(self, tmp_path):
        (tmp_path / "index.html").write_text("<html><body>console</body></html>")
        (tmp_path / "app.js").write_text("console.log('hi')")
        httpd = create_server(port=0, static_dir=tmp_path)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        try:
            base = f"http://127.0.0.1:{httpd.server_address[1]}"
            index = requests.get(base + "/")
            assert index.status_code == 200 and "console" in index.text
            js = requests.get(base + "/app.js")
            assert js.status_code == 200
            assert "javascript" in js.headers["Content-Type"]
            assert requests.get(base + "/nope.js").status_code == 404
            # requests normalizes dotted paths, so send traversal raw
            import http.client

            conn = http.client.HTTPConnection("127.0.0.1", httpd.server_address[1])
            conn.request("GET", "/../pyproject.toml")
            assert conn.getresponse().status == 404
            conn.close()
        finally:
            httpd.shutdown()
            httpd.server_close()

    def test_no_static_dir_404_on_root(self, server):
        assert requests.get(server + "/").status_code == 404


class TestConcurrency:
    def test_concurrent_previews_are_stable(self, server):
        neuron = make_neuron(69)
        sid = _upload(server, neuron).json()["id"]
        url = server + f"/session/{sid}/preview"

        def fetch(i):
            resp = requests.get(url, params={"tr": 100 + (i % 3), "tg": 100})
            return (i % 3, resp.content)

        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(fetch, range(24)))
        by_threshold = {}
        for key, content in results:
            by_threshold.setdefault(key, set()).add(content)
        # same parameters always give the same bytes, regardless of interleaving
        assert all(len(v) == 1 for v in by_threshold.values())
