"""Shared test fixtures: synthetic blob samples and a scriptable wire server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from vpsearch import (BBox, BlobObject, BlobWorld, ExplanationTarget, Image,
                      SyntheticBlobDetector, grid_partition)


def single_blob_sample(grid=(4, 4), cell=16, blob_cells=((0, 3), (1, 3)),
                       exponent=1.0, color=(200, 30, 90)):
    """Blob covering whole grid cells; returns (image, partition, world, target)."""
    rows, cols = grid
    height, width = rows * cell, cols * cell
    rs = [r for r, _ in blob_cells]
    cs = [c for _, c in blob_cells]
    blob = BBox(x1=min(cs) * cell, y1=min(rs) * cell,
                x2=(max(cs) + 1) * cell, y2=(max(rs) + 1) * cell)
    pixels = np.zeros((height, width, 3), dtype=np.uint8)
    pixels[int(blob.y1):int(blob.y2), int(blob.x1):int(blob.x2)] = color
    world = BlobWorld(objects=(BlobObject(region=blob, category="obj",
                                          exponent=exponent),))
    image = Image(pixels=pixels)
    partition = grid_partition(height, width, rows, cols)
    target = ExplanationTarget(target_box=blob, category="obj")
    return image, partition, world, target


def blob_detector(world, **kwargs) -> SyntheticBlobDetector:
    return SyntheticBlobDetector(world, **kwargs)


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        self.server.requests.append(json.loads(body))
        status, payload = self.server.responder(json.loads(body))
        data = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


class StubWireServer:
    """HTTP stub whose /detect behavior is set per test via ``responder``."""

    def __init__(self):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self.server.requests = []
        self.server.responder = lambda req: (200, {"detections": [], "scores_available": True})
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    @property
    def requests(self):
        return self.server.requests

    def respond_with(self, payload, status=200):
        self.server.responder = lambda req: (status, payload)

    def respond_via(self, fn):
        self.server.responder = fn

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def wire_server():
    server = StubWireServer()
    yield server
    server.close()
