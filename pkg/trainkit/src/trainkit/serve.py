"""File-exchange responder (protocol v1).

Watches `exchange/request/{uuid}/request.json`, answers each item with a
16-bit probability PNG under `exchange/response/{uuid}/`, and finishes every
request with a `response.json` marker.  A malformed request produces an
error marker for that uuid; serving continues.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import cv2
import numpy as np
import torch

from . import pngio
from .data import normalize, shrink_mask
from .models import TinyUNet

PROTOCOL_VERSION = 1


def load_model(model_path: str | Path, dropout: float = 0.0) -> TinyUNet:
    model = TinyUNet(dropout=dropout)
    model.load_state_dict(torch.load(model_path, weights_only=True))
    model.eval()
    return model


class ExchangeServer:
    """Answers exchange requests with learned models or in echo mode.

    ``models`` maps request kind ("full" | "patch" | "reconnect") to a
    loaded TinyUNet; kinds without a model are errors unless ``echo`` is
    set, in which case every request is answered with its own payload.
    """

    def __init__(self, exchange_dir: str | Path,
                 models: dict[str, TinyUNet] | None = None,
                 echo: bool = False, reconnect_size: int | None = None):
        self.exchange_dir = Path(exchange_dir)
        self.models = dict(models or {})
        self.echo = echo
        self.reconnect_size = reconnect_size
        self._handled: set[str] = set()

    # -- one polling sweep ---------------------------------------------------

    def poll_once(self) -> int:
        req_root = self.exchange_dir / "request"
        if not req_root.exists():
            return 0
        answered = 0
        for marker in sorted(req_root.glob("*/request.json")):
            uid = marker.parent.name
            if uid in self._handled:
                continue
            self._handled.add(uid)
            resp_dir = self.exchange_dir / "response" / uid
            resp_dir.mkdir(parents=True, exist_ok=True)
            try:
                items = self._answer(marker.parent, resp_dir)
                body = {"version": PROTOCOL_VERSION, "items": items}
            except Exception as e:  # any failure becomes a protocol error
                body = {"version": PROTOCOL_VERSION, "error": str(e)}
            # the marker is what requesters poll for, so it must appear
            # atomically and only after every answer PNG is fully on disk
            tmp = resp_dir / "response.json.tmp"
            tmp.write_text(json.dumps(body, indent=2, sort_keys=True))
            os.replace(tmp, resp_dir / "response.json")
            answered += 1
        return answered

    def serve_forever(self, poll_s: float = 0.05, stop_event=None,
                      max_requests: int | None = None) -> int:
        served = 0
        while stop_event is None or not stop_event.is_set():
            served += self.poll_once()
            if max_requests is not None and served >= max_requests:
                break
            time.sleep(poll_s)
        return served

    # -- request handling ----------------------------------------------------

    def _answer(self, req_dir: Path, resp_dir: Path) -> list[dict]:
        req = json.loads((req_dir / "request.json").read_text())
        if req.get("version") != PROTOCOL_VERSION:
            raise ValueError(f"unsupported protocol version {req.get('version')!r}")
        kind = req.get("kind")
        if kind not in ("full", "patch", "reconnect"):
            raise ValueError(f"unknown request kind {kind!r}")
        if not isinstance(req.get("items"), list) or not req["items"]:
            raise ValueError("request has no items")
        out = []
        for item in req["items"]:
            raster_path = req_dir / item["path"]
            if kind == "reconnect":
                raster = pngio.read_mask(raster_path).astype(np.float32)
            else:
                raster = pngio.read_gray(raster_path).astype(np.float32) / 65535.0
            prob = self._predict(kind, raster)
            name = f"{item['id']}.png"
            pngio.write_prob(resp_dir / name, prob)
            out.append({"id": item["id"], "path": name})
        return out

    def _predict(self, kind: str, raster: np.ndarray) -> np.ndarray:
        model = self.models.get(kind)
        if model is None:
            if self.echo:
                return raster
            raise ValueError(f"no model loaded for request kind {kind!r}")
        x = raster
        orig_shape = x.shape
        if kind == "reconnect" and self.reconnect_size:
            x = shrink_mask(raster, self.reconnect_size).astype(np.float32)
        elif kind != "reconnect":
            x = normalize(x)
        with torch.no_grad():
            logits = model(torch.from_numpy(x)[None, None])
            prob = torch.sigmoid(logits)[0, 0].numpy()
        if prob.shape != orig_shape:
            prob = cv2.resize(prob, (orig_shape[1], orig_shape[0]),
                              interpolation=cv2.INTER_LINEAR)
        return np.clip(prob, 0.0, 1.0)
