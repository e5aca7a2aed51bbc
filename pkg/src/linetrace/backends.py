"""Pluggable segmentation backends for the three pipeline stages.

Stage-1 backends map a whole image to a probability map, stage-2 backends
map an image patch to a binary patch, and stage-3 reconnectors map a mask
to a mask.  Reference implementations:

* ``oracle``         -- corrupts the known ground truth (stage 1/2 test double)
* ``ridge``          -- oriented second-derivative line filter bank
* ``rule_reconnect`` -- geometric endpoint bridging with noise cleanup
* ``hough``          -- probabilistic Hough-transform gap filling baseline
* ``external``       -- file-exchange adapter for externally served models
"""

from __future__ import annotations

import json
import math
import os
import time
import uuid as uuid_mod
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage
from skimage.transform import probabilistic_hough_line

from .errors import ExchangeError, ParameterError, ProtocolError
from . import imgio
from .patchvote import Patch
from .raster import (
    BinaryMask, GrayImage, Point, ProbMap, as_gray, as_mask, binarize,
    connected_components, geodesic_farthest, resize_mask, skeletonize,
)
from .synth import CorruptionSpec, Sample, corrupt_mask

EXCHANGE_PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str  # oracle | ridge | rule_reconnect | hough | external | identity
    params: dict = field(default_factory=dict)
    exchange_dir: str | None = None

    def __post_init__(self):
        known = {"oracle", "ridge", "rule_reconnect", "hough", "external", "identity"}
        if self.kind not in known:
            raise ParameterError(f"unknown backend kind {self.kind!r}")
        if self.kind == "external" and not self.exchange_dir:
            raise ParameterError("external backend requires an exchange directory")


@dataclass(frozen=True)
class HoughParams:
    mip: int = 50  # min intersecting points (accumulator threshold)
    mll: int = 30  # min line length, px
    mlg: int = 50  # max line gap, px

    def __post_init__(self):
        if min(self.mip, self.mll, self.mlg) < 1:
            raise ParameterError("Hough parameters must be positive integers")


@dataclass
class PredictionContext:
    """Per-image call context: id and (for oracle backends) the sample."""
    image_id: str = ""
    index: int = 0
    sample: Sample | None = None
    seed: int = 0


# ---------------------------------------------------------------------------
# ridge filtering
# ---------------------------------------------------------------------------

def ridge_response(img: GrayImage, sigmas: tuple[float, ...] = (1.5, 2.5),
                   orientations: int = 8) -> np.ndarray:
    """Oriented second-derivative line response, max over orientation and scale.

    The directional second derivative along unit direction n is n^T H n with
    H the Gaussian-smoothed Hessian; a bright line on a dark background has a
    strongly negative second derivative across its axis, so the response is
    the clipped negative, scale-normalized by sigma^2.  Flat regions respond
    near zero (the truncated derivative kernels leave a tiny DC residual).
    """
    a = as_gray(img).astype(np.float64)
    best = np.zeros_like(a)
    thetas = np.arange(orientations) * (np.pi / orientations)
    for s in sigmas:
        hrr = ndimage.gaussian_filter(a, s, order=(2, 0))
        hcc = ndimage.gaussian_filter(a, s, order=(0, 2))
        hrc = ndimage.gaussian_filter(a, s, order=(1, 1))
        for t in thetas:
            nr, nc = math.sin(t), math.cos(t)
            d2 = nr * nr * hrr + 2 * nr * nc * hrc + nc * nc * hcc
            np.maximum(best, (s * s) * np.maximum(-d2, 0.0), out=best)
    return best


class RidgeFullBackend:
    """Stage-1 contract: whole-image ridge probability map in [0, 1].

    ``abs_floor`` suppresses the DC residual of the derivative kernels so a
    structure-free image maps to an all-zero probability map instead of
    having its residual amplified by peak normalization.
    """

    def __init__(self, sigmas=(1.5, 2.5), orientations: int = 8,
                 abs_floor: float = 50.0):
        self.sigmas = tuple(float(s) for s in sigmas)
        self.orientations = int(orientations)
        self.abs_floor = float(abs_floor)

    def predict_full(self, img: GrayImage, ctx: PredictionContext | None = None) -> ProbMap:
        resp = ridge_response(img, self.sigmas, self.orientations)
        resp[resp < self.abs_floor] = 0.0
        peak = resp.max()
        if peak <= 0:
            return np.zeros_like(resp)
        return resp / peak


class RidgePatchBackend:
    """Stage-2 contract: binary ridge detection on one patch.

    The patch is binarized at max(absolute floor, rel_threshold * patch peak)
    so that structure-free patches come out all-zero instead of having their
    noise amplified by normalization.
    """

    def __init__(self, sigmas=(1.5, 2.5), orientations: int = 8,
                 rel_threshold: float = 0.35, abs_floor: float = 400.0):
        self.sigmas = tuple(float(s) for s in sigmas)
        self.orientations = int(orientations)
        self.rel_threshold = float(rel_threshold)
        self.abs_floor = float(abs_floor)

    def predict_patch(self, patch: Patch, ctx: PredictionContext | None = None) -> Patch:
        resp = ridge_response(patch.payload, self.sigmas, self.orientations)
        thr = max(self.abs_floor, self.rel_threshold * resp.max())
        return Patch(patch.offset, (resp >= thr).astype(np.uint8))


# ---------------------------------------------------------------------------
# oracle backends (ground-truth based test doubles)
# ---------------------------------------------------------------------------

class OracleFullBackend:
    """Stage-1 test double: returns a corrupted probability map of the GT.

    ``blur_sigma`` softens the probability map the way a real segmentation
    network does at object boundaries; with the low stage-1 binarization
    threshold the blur halo widens the mask by a few pixels.
    """

    def __init__(self, corruption: CorruptionSpec, blur_sigma: float = 0.0):
        self.corruption = corruption
        self.blur_sigma = float(blur_sigma)

    def predict_full(self, img: GrayImage, ctx: PredictionContext) -> ProbMap:
        if ctx is None or ctx.sample is None:
            raise ParameterError("oracle backend needs the sample in the context")
        gt = ctx.sample.gt_mask
        tip = ctx.sample.tip
        h, w = as_gray(img).shape
        if gt.shape != (h, w):
            gt = resize_mask(gt, (h, w))
            sy, sx = h / ctx.sample.gt_mask.shape[0], w / ctx.sample.gt_mask.shape[1]
            tip = Point(min(int(tip.row * sy), h - 1), min(int(tip.col * sx), w - 1))
            if not gt[tip.row, tip.col]:
                fg = np.argwhere(gt > 0)
                j = np.argmin(((fg - [tip.row, tip.col]) ** 2).sum(axis=1))
                tip = Point(int(fg[j][0]), int(fg[j][1]))
        prob = corrupt_mask(gt, tip, self.corruption, index=ctx.index)
        if self.blur_sigma > 0:
            prob = np.clip(ndimage.gaussian_filter(prob, self.blur_sigma), 0.0, 1.0)
        return prob


class OraclePatchBackend:
    """Stage-2 test double: GT crop at the patch window (uncorrupted mode)."""

    def predict_patch(self, patch: Patch, ctx: PredictionContext) -> Patch:
        if ctx is None or ctx.sample is None:
            raise ParameterError("oracle backend needs the sample in the context")
        gt = as_mask(ctx.sample.gt_mask)
        if gt.shape[0] < patch.offset.row + patch.payload.shape[0] or \
           gt.shape[1] < patch.offset.col + patch.payload.shape[1]:
            raise ParameterError("patch window exceeds the sample ground truth")
        rs, cs = patch.window()
        return Patch(patch.offset, gt[rs, cs].copy())


class IdentityReconnector:
    """Stage-3 no-op, useful for ablations and wiring tests."""

    def reconnect(self, mask: BinaryMask, ctx: PredictionContext | None = None) -> BinaryMask:
        return as_mask(mask).copy()


# ---------------------------------------------------------------------------
# rule-based reconnection (stage-3 reference)
# ---------------------------------------------------------------------------

def _line_ends(skel: BinaryMask) -> list[Point]:
    """The two ends of a fragment: its geodesic-diameter endpoints.

    Double BFS over the skeleton; immune to the short side spurs that
    thinning grows on thick strokes.
    """
    pts = np.argwhere(skel > 0)
    if len(pts) == 0:
        return []
    start = Point(int(pts[0][0]), int(pts[0][1]))
    e1, _ = geodesic_farthest(skel, start)
    e2, d = geodesic_farthest(skel, e1)
    return [e1] if d == 0 else [e1, e2]


def _outward_tangent(skel: BinaryMask, endpoint: Point, window: int = 12) -> np.ndarray | None:
    """Unit direction pointing out of the line at one of its ends.

    Principal axis of the skeleton pixels near the endpoint, oriented from
    their centroid toward the endpoint; None when the neighborhood is too
    short or too curled for a trustworthy estimate.
    """
    pts = np.argwhere(skel > 0).astype(np.float64)
    e = np.array([endpoint.row, endpoint.col], dtype=np.float64)
    cheb = np.abs(pts - e).max(axis=1)
    local = pts[cheb <= window]
    if len(local) < 5:
        return None
    centered = local - local.mean(axis=0)
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    if sv[0] <= 0 or sv[1] / sv[0] > 0.4:  # hook or blob, not a line end
        return None
    axis = vt[0]
    toward_end = e - local.mean(axis=0)
    n = np.linalg.norm(toward_end)
    if n < 2.0:
        return None
    if np.dot(axis, toward_end) < 0:
        axis = -axis
    return axis / np.linalg.norm(axis)


def _angle_deg(u: np.ndarray, v: np.ndarray) -> float:
    c = float(np.clip(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)), -1.0, 1.0))
    return math.degrees(math.acos(c))


def rule_reconnect(mask: BinaryMask, max_gap: float = 210.0, max_turn: float = 100.0,
                   thickness: int = 3, noise_floor: int = 10) -> BinaryMask:
    """Bridge endpoint pairs of distinct fragments, then drop far noise.

    Endpoints whose gap is within ``max_gap`` and where neither fragment
    has to turn by more than ``max_turn`` degrees onto the straight bridge
    are joined by a stroke of the given thickness; the closest admissible
    pair is bridged first and the search repeats until no pair qualifies.
    Direction checks are skipped for fragments too short to estimate a
    tangent.  Components smaller than ``noise_floor`` px are treated as
    noise throughout: they are never bridged, and those farther than
    ``max_gap`` from the main chain are removed afterwards.
    """
    m = as_mask(mask).copy()
    if not m.any():
        return m

    while True:
        labels, comps = connected_components(m, 8)
        if len(comps) <= 1:
            break
        endpoints: list[tuple[int, Point, np.ndarray | None]] = []
        for comp in comps:
            if comp.area < noise_floor:
                continue
            sub = (labels == comp.label).astype(np.uint8)
            skel = skeletonize(sub)
            eps = _line_ends(skel)
            if not eps:  # pragma: no cover - nonempty component has a skeleton
                eps = [comp.topmost]
            for e in eps:
                endpoints.append((comp.label, e, _outward_tangent(skel, e)))
        best = None
        for i in range(len(endpoints)):
            la, pa, ta = endpoints[i]
            for j in range(i + 1, len(endpoints)):
                lb, pb, tb = endpoints[j]
                if la == lb:
                    continue
                chord = np.array([pb.row - pa.row, pb.col - pa.col], dtype=np.float64)
                gap = float(np.linalg.norm(chord))
                if gap == 0.0 or gap > max_gap:
                    continue
                # turn onto the straight bridge, checked at each junction:
                # a's outward tangent should roughly follow the chord a->b,
                # and b's outward tangent the reverse chord
                if ta is not None and _angle_deg(ta, chord) > max_turn:
                    continue
                if tb is not None and _angle_deg(tb, -chord) > max_turn:
                    continue
                if best is None or gap < best[0]:
                    best = (gap, pa, pb)
        if best is None:
            break
        _, pa, pb = best
        cv2.line(m, (pa.col, pa.row), (pb.col, pb.row), 1, thickness=max(int(thickness), 1))

    # noise cleanup: small components far away from the main chain
    labels, comps = connected_components(m, 8)
    if len(comps) > 1:
        main = max(comps, key=lambda c: c.area)
        main_pts = np.argwhere(labels == main.label)
        for comp in comps:
            if comp.label == main.label or comp.area >= noise_floor:
                continue
            pts = np.argwhere(labels == comp.label)
            d2 = ((pts[:, None, :] - main_pts[None, :, :]) ** 2).sum(axis=2).min()
            if math.sqrt(float(d2)) > max_gap:
                m[labels == comp.label] = 0
    return m


class RuleReconnector:
    def __init__(self, max_gap: float = 210.0, max_turn: float = 100.0,
                 thickness: int = 3, noise_floor: int = 10):
        self.max_gap = float(max_gap)
        self.max_turn = float(max_turn)
        self.thickness = int(thickness)
        self.noise_floor = int(noise_floor)

    def reconnect(self, mask: BinaryMask, ctx: PredictionContext | None = None) -> BinaryMask:
        return rule_reconnect(mask, self.max_gap, self.max_turn,
                              self.thickness, self.noise_floor)


# ---------------------------------------------------------------------------
# probabilistic Hough baseline (stage-3 alternative)
# ---------------------------------------------------------------------------

def hough_postprocess(mask: BinaryMask, params: HoughParams = HoughParams(),
                      thickness: int = 3, seed: int = 0) -> BinaryMask:
    """OR detected line segments into the mask (never removes pixels)."""
    m = as_mask(mask)
    if not m.any():
        return m.copy()
    segments = probabilistic_hough_line(
        m.astype(bool), threshold=params.mip, line_length=params.mll,
        line_gap=params.mlg, rng=np.random.default_rng(seed))
    out = m.copy()
    add = np.zeros_like(m)
    for (x0, y0), (x1, y1) in segments:
        cv2.line(add, (int(x0), int(y0)), (int(x1), int(y1)), 1, thickness=1)
    if thickness > 1:
        k = np.ones((thickness, thickness), np.uint8)
        add = cv2.dilate(add, k)
    return np.maximum(out, add)


class HoughReconnector:
    def __init__(self, params: HoughParams = HoughParams(), thickness: int = 3, seed: int = 0):
        self.params = params
        self.thickness = int(thickness)
        self.seed = int(seed)

    def reconnect(self, mask: BinaryMask, ctx: PredictionContext | None = None) -> BinaryMask:
        return hough_postprocess(mask, self.params, self.thickness, self.seed)


# ---------------------------------------------------------------------------
# external file-exchange adapter (protocol v1)
# ---------------------------------------------------------------------------

def write_exchange_request(exchange_dir: str | Path, kind: str,
                           rasters: list[tuple[str, np.ndarray, dict]]) -> str:
    """Write request/{uuid}/ inputs plus request.json; returns the uuid.

    ``rasters`` holds (item id, array, extra fields).  Images are written as
    16-bit gray PNGs and masks as {0,255} PNGs depending on ``kind``.
    """
    uid = str(uuid_mod.uuid4())
    req_dir = Path(exchange_dir) / "request" / uid
    req_dir.mkdir(parents=True, exist_ok=True)
    items = []
    for item_id, arr, extra in rasters:
        name = f"{item_id}.png"
        if kind == "reconnect":
            imgio.write_mask_png(req_dir / name, as_mask(arr))
        else:
            imgio.write_gray_png(req_dir / name, as_gray(arr))
        items.append({"id": item_id, "path": name, **extra})
    req = {"version": EXCHANGE_PROTOCOL_VERSION, "kind": kind, "items": items}
    # the marker is what responders poll for, so it must appear atomically
    # and only after every input raster is fully on disk
    tmp = req_dir / "request.json.tmp"
    tmp.write_text(json.dumps(req, indent=2, sort_keys=True))
    os.replace(tmp, req_dir / "request.json")
    return uid


def read_exchange_response(exchange_dir: str | Path, uid: str,
                           timeout_s: float = 30.0, poll_s: float = 0.05) -> dict[str, ProbMap]:
    """Poll response/{uuid}/response.json; returns id -> probability map."""
    resp_dir = Path(exchange_dir) / "response" / uid
    marker = resp_dir / "response.json"
    deadline = time.monotonic() + timeout_s
    while not marker.exists():
        if time.monotonic() > deadline:
            raise ExchangeError(f"no response for request {uid} within {timeout_s}s", uuid=uid)
        time.sleep(poll_s)
    resp = json.loads(marker.read_text())
    if resp.get("version") != EXCHANGE_PROTOCOL_VERSION:
        raise ProtocolError(f"exchange protocol version mismatch for {uid}")
    if "error" in resp:
        raise ExchangeError(f"responder error for {uid}: {resp['error']}", uuid=uid)
    out = {}
    for item in resp["items"]:
        out[item["id"]] = imgio.read_probmap_png(resp_dir / item["path"])
    return out


class ExternalBackend:
    """Adapter serving all three stage contracts over the file exchange."""

    def __init__(self, exchange_dir: str | Path, timeout_s: float = 30.0):
        self.exchange_dir = Path(exchange_dir)
        if not self.exchange_dir.exists():
            raise ParameterError(f"exchange directory {exchange_dir} does not exist")
        self.timeout_s = float(timeout_s)

    def predict_full(self, img: GrayImage, ctx: PredictionContext | None = None) -> ProbMap:
        uid = write_exchange_request(self.exchange_dir, "full", [("image", img, {})])
        return read_exchange_response(self.exchange_dir, uid, self.timeout_s)["image"]

    def predict_patch(self, patch: Patch, ctx: PredictionContext | None = None) -> Patch:
        extra = {"offset": [patch.offset.row, patch.offset.col],
                 "size": list(patch.payload.shape)}
        uid = write_exchange_request(self.exchange_dir, "patch",
                                     [("patch", patch.payload, extra)])
        prob = read_exchange_response(self.exchange_dir, uid, self.timeout_s)["patch"]
        return Patch(patch.offset, binarize(prob, 0.5))

    def reconnect(self, mask: BinaryMask, ctx: PredictionContext | None = None) -> BinaryMask:
        uid = write_exchange_request(self.exchange_dir, "reconnect", [("mask", mask, {})])
        prob = read_exchange_response(self.exchange_dir, uid, self.timeout_s)["mask"]
        return binarize(prob, 0.5)


# ---------------------------------------------------------------------------
# descriptor -> backend construction
# ---------------------------------------------------------------------------

def build_full_backend(desc: BackendDescriptor):
    if desc.kind == "oracle":
        params = dict(desc.params)
        blur = params.pop("blur_sigma", 0.0)
        return OracleFullBackend(CorruptionSpec(**params), blur_sigma=blur)
    if desc.kind == "ridge":
        return RidgeFullBackend(**desc.params)
    if desc.kind == "external":
        return ExternalBackend(desc.exchange_dir, **desc.params)
    raise ParameterError(f"backend kind {desc.kind!r} cannot serve stage 1")


def build_patch_backend(desc: BackendDescriptor):
    if desc.kind == "oracle":
        return OraclePatchBackend()
    if desc.kind == "ridge":
        return RidgePatchBackend(**desc.params)
    if desc.kind == "external":
        return ExternalBackend(desc.exchange_dir, **desc.params)
    raise ParameterError(f"backend kind {desc.kind!r} cannot serve stage 2")


def build_reconnector(desc: BackendDescriptor):
    if desc.kind == "rule_reconnect":
        return RuleReconnector(**desc.params)
    if desc.kind == "hough":
        p = desc.params
        hp = HoughParams(mip=p.get("mip", 50), mll=p.get("mll", 30), mlg=p.get("mlg", 50))
        return HoughReconnector(hp, thickness=p.get("thickness", 3), seed=p.get("seed", 0))
    if desc.kind == "identity":
        return IdentityReconnector()
    if desc.kind == "external":
        return ExternalBackend(desc.exchange_dir, **desc.params)
    raise ParameterError(f"backend kind {desc.kind!r} cannot serve stage 3")
