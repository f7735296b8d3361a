"""HTTP service for the browser frontend: slice rendering with HU windowing,
parameterized synthesis previews, and blinded reader-study sessions.

Scans live in a data directory as ``<id>.nii(.gz)`` with optional liver
masks ``<id>_liver.nii(.gz)``; reader-study truth lives server-side in
``truth.json`` (mapping id -> "real"|"synthetic") and is never serialized
to a client until its session is complete. Sessions are persisted as
append-only JSONL files under ``sessions/`` so they survive restarts.
"""

from __future__ import annotations

import hashlib
import io
import json
import threading
import uuid
from collections import OrderedDict
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Response
from PIL import Image

from .errors import CollisionError, UndefinedMetricsError
from .generator import synthesize_with_spec
from .metrics import TuringCounts, turing_metrics
from .nifti import load_label, load_scalar
from .params import GenConfig, PRESETS, TumorSpec, substream
from .vessels import estimate_parenchyma_stats, segment_vessels

_AXES = {"x": 0, "y": 1, "z": 2}
JUDGMENTS = ("real", "synthetic", "unsure")


def window_to_uint8(hu: np.ndarray, wc: float, ww: float) -> np.ndarray:
    """Map HU to 8-bit gray: clamp((HU - (wc - ww/2)) / ww) * 255, round half up."""
    lo = wc - ww / 2.0
    v = np.clip((hu.astype(np.float64) - lo) / ww, 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def _png_bytes(gray: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(gray, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def _slice_image(data: np.ndarray, axis: int, index: int) -> np.ndarray:
    sl = np.take(data, index, axis=axis)
    return np.ascontiguousarray(sl.T)  # rows = second remaining axis, cols = first


class _ScanStore:
    """Lazily loaded scans and liver masks from the data directory."""

    def __init__(self, data_dir: Path):
        self.data_dir = data_dir
        self._cache = {}
        self._lock = threading.Lock()

    @staticmethod
    def _scan_id(path: Path):
        name = path.name
        for ext in (".nii.gz", ".nii"):
            if name.endswith(ext):
                return name[: -len(ext)]
        return None

    def list_ids(self):
        ids = []
        for path in sorted(self.data_dir.iterdir()):
            if not path.is_file():
                continue
            sid = self._scan_id(path)
            if sid and not sid.endswith("_liver") and not sid.endswith("_label"):
                ids.append(sid)
        return ids

    def _find(self, stem: str):
        for ext in (".nii.gz", ".nii"):
            p = self.data_dir / f"{stem}{ext}"
            if p.exists():
                return p
        return None

    def get(self, scan_id: str):
        with self._lock:
            if scan_id in self._cache:
                return self._cache[scan_id]
        path = self._find(scan_id)
        if path is None:
            raise HTTPException(404, f"unknown scan {scan_id!r}")
        ct = load_scalar(path)
        liver_path = self._find(f"{scan_id}_liver")
        liver = load_label(liver_path) if liver_path else None
        with self._lock:
            self._cache[scan_id] = (ct, liver)
        return ct, liver


class _PreviewCache:
    """LRU cache of rendered previews bounded by a byte budget.

    Previews are regenerable from their request, so eviction is always safe.
    """

    def __init__(self, max_bytes: int):
        self.max_bytes = max_bytes
        self._entries = OrderedDict()  # key -> (value, nbytes)
        self._bytes = 0
        self._lock = threading.Lock()

    def get_value(self, key):
        with self._lock:
            if key in self._entries:
                self._entries.move_to_end(key)
                return self._entries[key][0]
        return None

    def put_value(self, key, value, nbytes):
        with self._lock:
            if key in self._entries:
                self._entries.move_to_end(key)
                return
            self._entries[key] = (value, nbytes)
            self._bytes += nbytes
            while self._bytes > self.max_bytes and len(self._entries) > 1:
                _, (_, old_bytes) = self._entries.popitem(last=False)
                self._bytes -= old_bytes


class _Session:
    def __init__(self, session_id, name, scan_order, truth):
        self.session_id = session_id
        self.name = name
        self.scan_order = list(scan_order)
        self.truth = dict(truth)           # server-side only
        self.judgments = {}
        self.closed = False
        self.lock = threading.Lock()

    @property
    def complete(self):
        return self.closed or all(s in self.judgments for s in self.scan_order)

    def state(self):
        """Client-visible state; never includes truth."""
        return {
            "session_id": self.session_id,
            "name": self.name,
            "scans": self.scan_order,
            "judged": {s: j for s, j in self.judgments.items()},
            "remaining": [s for s in self.scan_order if s not in self.judgments],
            "complete": self.complete,
        }

    def counts(self) -> TuringCounts:
        c = {"real": {"real": 0, "synthetic": 0, "unsure": 0},
             "synthetic": {"real": 0, "synthetic": 0, "unsure": 0}}
        for scan_id, judgment in self.judgments.items():
            c[self.truth[scan_id]][judgment] += 1
        return TuringCounts(
            real_as_real=c["real"]["real"],
            real_as_synthetic=c["real"]["synthetic"],
            synthetic_as_real=c["synthetic"]["real"],
            synthetic_as_synthetic=c["synthetic"]["synthetic"],
            real_unsure=c["real"]["unsure"],
            synthetic_unsure=c["synthetic"]["unsure"],
        )


class _SessionStore:
    """Append-only JSONL persistence, one file per session."""

    def __init__(self, sessions_dir: Path):
        self.dir = sessions_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        self.sessions = {}
        self._lock = threading.Lock()
        self._load_existing()

    def _path(self, session_id):
        return self.dir / f"{session_id}.jsonl"

    def _load_existing(self):
        for path in sorted(self.dir.glob("*.jsonl")):
            session = None
            for line in path.read_text().splitlines():
                if not line.strip():
                    continue
                event = json.loads(line)
                if event["event"] == "create":
                    session = _Session(event["session_id"], event.get("name", ""),
                                       event["scans"], event["truth"])
                elif event["event"] == "judge" and session is not None:
                    session.judgments[event["scan_id"]] = event["judgment"]
                elif event["event"] == "close" and session is not None:
                    session.closed = True
            if session is not None:
                self.sessions[session.session_id] = session

    def _append(self, session_id, event):
        with open(self._path(session_id), "a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def create(self, name, scan_order, truth):
        session_id = uuid.uuid4().hex[:12]
        session = _Session(session_id, name, scan_order, truth)
        with self._lock:
            self.sessions[session_id] = session
        self._append(session_id, {
            "event": "create", "session_id": session_id, "name": name,
            "scans": list(scan_order), "truth": dict(truth),
        })
        return session

    def get(self, session_id) -> _Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return session

    def record_judgment(self, session, scan_id, judgment):
        self._append(session.session_id,
                     {"event": "judge", "scan_id": scan_id, "judgment": judgment})

    def record_close(self, session):
        self._append(session.session_id, {"event": "close"})


def _spec_from_payload(payload: dict, index: int) -> TumorSpec:
    known = set(TumorSpec.__dataclass_fields__)
    unknown = set(payload) - known
    if unknown:
        raise HTTPException(400, f"unknown tumor spec fields: {sorted(unknown)}")
    try:
        spec = TumorSpec.from_dict(payload)
    except (TypeError, ValueError) as err:
        raise HTTPException(400, f"malformed tumor spec: {err}") from None
    if "index" not in payload:
        spec.index = index
    return spec


def create_app(data_dir, preview_cache_mb: int = 256, config: GenConfig | None = None) -> FastAPI:
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise ValueError(f"data dir {data_dir} does not exist")
    cfg = config or GenConfig()
    app = FastAPI(title="tumorlab")
    scans = _ScanStore(data_dir)
    previews = _PreviewCache(preview_cache_mb * 1024 * 1024)
    sessions = _SessionStore(data_dir / "sessions")
    derived = {}  # scan_id -> (stats, vessels), computed once per scan
    derived_lock = threading.Lock()

    def _truth_map():
        path = data_dir / "truth.json"
        if not path.exists():
            return {}
        return json.loads(path.read_text())

    def _scan_entry(scan_id):
        ct, liver = scans.get(scan_id)
        return {
            "id": scan_id,
            "dims": list(ct.dims),
            "spacing": list(ct.spacing),
            "has_liver": liver is not None,
        }

    def _render_slice(ct, labels, axis, index, wc, ww, layer):
        if axis not in _AXES:
            raise HTTPException(400, f"axis must be one of {sorted(_AXES)}")
        ax = _AXES[axis]
        if ww <= 0:
            raise HTTPException(400, "window width must be > 0")
        data = ct.data if layer == "ct" else None
        if layer == "label":
            if labels is None:
                raise HTTPException(404, "no label volume available")
            data = labels.data
        if not (0 <= index < data.shape[ax]):
            raise HTTPException(404, f"slice index {index} out of range "
                                     f"[0, {data.shape[ax] - 1}]")
        if layer == "label":
            gray = _slice_image(data, ax, index).astype(np.uint16)
            gray = np.clip(gray * 127, 0, 255).astype(np.uint8)
        else:
            gray = window_to_uint8(_slice_image(data, ax, index), wc, ww)
        return Response(content=_png_bytes(gray), media_type="image/png")

    def _derived(scan_id, ct, liver):
        with derived_lock:
            if scan_id in derived:
                return derived[scan_id]
        stats = estimate_parenchyma_stats(ct, liver, cfg)
        vessels = segment_vessels(ct, liver, stats, cfg)
        with derived_lock:
            derived[scan_id] = (stats, vessels)
        return stats, vessels

    # ------------------------------------------------------------------ scans

    @app.get("/config")
    def get_config():
        return {
            "config": cfg.to_dict(),
            "presets": {
                name: {
                    "radius_mm": p.radius_mm,
                    "deform_range": list(p.deform_range),
                    "count_range": list(p.count_range),
                }
                for name, p in PRESETS.items()
            },
            "slider_ranges": {
                "mean_hu": [0.0, 200.0],
                "grain_scale": [1.0, 2.0],
                "edge_softness": list(cfg.edge_softness_range),
                "deform_strength": [0.0, 12.0],
                "radius_mm": [2.0, 40.0],
                "mass_intensity": [0.0, 100.0],
                "capsule_brightness_hu": [0.0, 200.0],
                "capsule_edge_band": list(cfg.capsule_edge_band),
            },
        }

    @app.get("/scans")
    def list_scans():
        return {"scans": [_scan_entry(sid) for sid in scans.list_ids()]}

    @app.get("/scans/{scan_id}/slice")
    def scan_slice(scan_id: str, axis: str = "z", index: int = 0,
                   wc: float = 60.0, ww: float = 400.0, layer: str = "ct"):
        ct, liver = scans.get(scan_id)
        return _render_slice(ct, liver, axis, index, wc, ww, layer)

    # --------------------------------------------------------------- previews

    @app.post("/preview")
    def preview(payload: dict = Body(...)):
        scan_id = payload.get("scan_id")
        if not scan_id:
            raise HTTPException(400, "scan_id is required")
        ct, liver = scans.get(scan_id)
        if liver is None:
            raise HTTPException(400, f"scan {scan_id!r} has no liver mask; preview "
                                     "synthesis needs one")
        seed = int(payload.get("seed", 0))
        training = bool(payload.get("training", False))
        raw_specs = payload.get("specs", [])
        if not isinstance(raw_specs, list):
            raise HTTPException(400, "specs must be a list")
        specs = [_spec_from_payload(s, i) for i, s in enumerate(raw_specs)]

        key_src = json.dumps(
            {"scan": scan_id, "seed": seed, "training": training,
             "specs": [s.to_dict() for s in specs]},
            sort_keys=True,
        )
        preview_id = hashlib.sha256(key_src.encode()).hexdigest()[:16]

        cached = previews.get_value(preview_id)
        if cached is None:
            run_cfg = cfg.updated(enable_mass_effect=False, enable_capsule=False) if training else cfg
            stats, vessels = _derived(scan_id, ct, liver)
            try:
                out_ct, out_labels, prov = synthesize_with_spec(
                    ct, liver, specs, seed, run_cfg,
                    vessels=vessels, stats=stats, scan_id=scan_id,
                )
            except CollisionError as err:
                raise HTTPException(
                    422, {"error": "collision", "tumor_index": err.tumor_index}
                ) from None
            except ValueError as err:
                raise HTTPException(400, str(err)) from None
            cached = (out_ct, out_labels, prov.to_dict())
            nbytes = out_ct.data.nbytes + out_labels.data.nbytes
            previews.put_value(preview_id, cached, nbytes)

        out_ct, out_labels, prov_dict = cached
        return {
            "preview_id": preview_id,
            "scan_id": scan_id,
            "dims": list(out_ct.dims),
            "spacing": list(out_ct.spacing),
            "provenance": prov_dict,
            "slice_url": f"/previews/{preview_id}/slice",
        }

    @app.get("/previews/{preview_id}/slice")
    def preview_slice(preview_id: str, axis: str = "z", index: int = 0,
                      wc: float = 60.0, ww: float = 400.0, layer: str = "ct"):
        cached = previews.get_value(preview_id)
        if cached is None:
            raise HTTPException(404, f"unknown or evicted preview {preview_id!r}")
        out_ct, out_labels, _ = cached
        return _render_slice(out_ct, out_labels, axis, index, wc, ww, layer)

    # --------------------------------------------------------------- sessions

    @app.post("/sessions")
    def create_session(payload: dict = Body(default={})):
        truth = _truth_map()
        if not truth:
            raise HTTPException(400, "no truth.json in the data dir; cannot run "
                                     "a reader study")
        scan_ids = payload.get("scan_ids") or sorted(truth)
        unknown = [s for s in scan_ids if s not in truth]
        if unknown:
            raise HTTPException(400, f"scans missing from truth.json: {unknown}")
        bad = [s for s in scan_ids if scans._find(s) is None]
        if bad:
            raise HTTPException(400, f"scan volumes not found: {bad}")
        order = list(scan_ids)
        seed = payload.get("seed")
        if seed is not None:
            order = [order[i] for i in substream(int(seed), 77).permutation(len(order))]
        session = sessions.create(payload.get("name", ""), order,
                                  {s: truth[s] for s in order})
        return session.state()

    @app.get("/sessions/{session_id}")
    def session_state(session_id: str):
        return sessions.get(session_id).state()

    @app.post("/sessions/{session_id}/judge")
    def judge(session_id: str, payload: dict = Body(...)):
        session = sessions.get(session_id)
        scan_id = payload.get("scan_id")
        judgment = payload.get("judgment")
        if judgment not in JUDGMENTS:
            raise HTTPException(400, f"judgment must be one of {JUDGMENTS}")
        if scan_id not in session.scan_order:
            raise HTTPException(404, f"scan {scan_id!r} is not part of this session")
        with session.lock:
            if session.complete:
                raise HTTPException(409, "session is already complete")
            if scan_id in session.judgments:
                raise HTTPException(409, f"scan {scan_id!r} was already judged")
            session.judgments[scan_id] = judgment
            sessions.record_judgment(session, scan_id, judgment)
        return session.state()

    @app.post("/sessions/{session_id}/close")
    def close_session(session_id: str):
        session = sessions.get(session_id)
        with session.lock:
            if not session.closed:
                session.closed = True
                sessions.record_close(session)
        return session.state()

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str):
        session = sessions.get(session_id)
        if not session.complete:
            raise HTTPException(409, "session is not complete; judge all scans "
                                     "or close it explicitly")
        counts = session.counts()
        payload = {
            "session_id": session.session_id,
            "truth": dict(session.truth),
            "judgments": dict(session.judgments),
        }
        try:
            tally = turing_metrics(counts)
            payload.update(tally.to_dict())
        except UndefinedMetricsError as err:
            payload.update({
                "counts": dict(counts.__dict__),
                "definite": counts.definite,
                "unsure": counts.unsure,
                "error": "undefined-metrics",
                "detail": str(err),
            })
        return payload

    return app


def run_server(data_dir, port: int = 8000, host: str = "127.0.0.1",
               preview_cache_mb: int = 256, config: GenConfig | None = None):
    import uvicorn

    app = create_app(data_dir, preview_cache_mb, config)
    uvicorn.run(app, host=host, port=port, log_level="info")
