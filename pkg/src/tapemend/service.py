"""HTTP job service: upload a video (frame zip or container), restore it
asynchronously with the loaded weights, download and compare the result, or
pick a server-side example clip.

Persistence is a file-backed store under one data directory: JSON job records
plus per-video frame directories. On startup any job left in "running" (a
crashed worker) is re-queued, so restarts never leave a job stuck. A single
FIFO worker owns the model; handlers only read and enqueue.
"""

from __future__ import annotations

import contextlib
import io
import json
import logging
import threading
import time
import uuid
import zipfile
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image

from .degradation import DegradationConfig, degrade_clip
from .errors import InvalidParam, TapemendError
from .inference import restore_video
from .model import ModelConfig, RestorationModel, init_parameters, load_weights
from .video_io import Clip, load_clip, save_clip

logger = logging.getLogger(__name__)

JOB_STATES = ("queued", "running", "done", "failed")


@dataclass
class ServiceSettings:
    data_dir: Path
    weights_path: Path | None = None
    model: RestorationModel | None = None  # takes precedence over weights_path
    examples_dir: Path | None = None
    ui_dir: Path | None = None
    max_upload_bytes: int = 500 * 1024 * 1024
    max_frames: int = 10_000
    allow_duplicate_jobs: bool = False
    worker: bool = True  # disable to drive jobs manually in tests


@dataclass
class RestoreJob:
    id: str
    video_id: str
    state: str = "queued"
    progress: float = 0.0
    input_ref: str = ""
    output_ref: str | None = None
    error: str | None = None
    created_at: float = 0.0
    finished_at: float | None = None

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "RestoreJob":
        return cls(**doc)


class JobStore:
    """JSON-file-per-job store; all mutations go through one writer lock."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, job_id: str) -> Path:
        return self.root / f"{job_id}.json"

    def save(self, job: RestoreJob) -> None:
        with self._lock:
            if job.state not in JOB_STATES:
                raise InvalidParam(f"illegal job state {job.state!r}")
            tmp = self._path(job.id).with_suffix(".tmp")
            tmp.write_text(json.dumps(job.to_json()))
            tmp.replace(self._path(job.id))

    def load(self, job_id: str) -> RestoreJob | None:
        path = self._path(job_id)
        if not path.exists():
            return None
        return RestoreJob.from_json(json.loads(path.read_text()))

    def all_jobs(self) -> list[RestoreJob]:
        jobs = [RestoreJob.from_json(json.loads(p.read_text()))
                for p in sorted(self.root.glob("*.json"))]
        return sorted(jobs, key=lambda j: j.created_at)

    def recover(self) -> int:
        """Re-queue jobs a dead worker left in running; returns how many."""
        recovered = 0
        for job in self.all_jobs():
            if job.state == "running":
                job.state = "queued"
                job.progress = 0.0
                self.save(job)
                recovered += 1
        if recovered:
            logger.info("re-queued %d interrupted job(s)", recovered)
        return recovered

    def active_for_video(self, video_id: str) -> RestoreJob | None:
        for job in self.all_jobs():
            if job.video_id == video_id and job.state in ("queued", "running"):
                return job
        return None

    def next_queued(self) -> RestoreJob | None:
        for job in self.all_jobs():
            if job.state == "queued":
                return job
        return None


class VideoStore:
    """Per-video frame directories plus a metadata record."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)

    def video_dir(self, video_id: str) -> Path:
        return self.root / video_id

    def exists(self, video_id: str) -> bool:
        return (self.video_dir(video_id) / "meta.json").exists()

    def meta(self, video_id: str) -> dict:
        return json.loads((self.video_dir(video_id) / "meta.json").read_text())

    def add(self, clip: Clip, kind: str, filename: str) -> str:
        video_id = uuid.uuid4().hex[:12]
        vdir = self.video_dir(video_id)
        save_clip(clip.to_storage(), vdir / "original")
        (vdir / "meta.json").write_text(json.dumps({
            "video_id": video_id, "kind": kind, "filename": filename,
            "frames": len(clip), "fps": clip.fps,
            "width": clip.width, "height": clip.height}))
        return video_id

    def original(self, video_id: str) -> Clip:
        return load_clip(self.video_dir(video_id) / "original", source_id=video_id)

    def restored_dir(self, video_id: str) -> Path:
        return self.video_dir(video_id) / "restored"


def _zip_to_clip(payload: bytes) -> Clip:
    """Decode a zip of image frames (lexicographic name order)."""
    frames = []
    with zipfile.ZipFile(io.BytesIO(payload)) as zf:
        names = sorted(n for n in zf.namelist()
                       if not n.endswith("/") and not Path(n).name.startswith("."))
        for name in names:
            try:
                with zf.open(name) as fh:
                    img = Image.open(io.BytesIO(fh.read()))
                    frames.append(np.asarray(img.convert("RGB"), dtype=np.uint8))
            except Exception:
                continue
    if not frames:
        raise InvalidParam("zip contains no decodable frames")
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise InvalidParam(f"zip frames disagree on dimensions: {sorted(shapes)}")
    return Clip(np.stack(frames))


def _clip_to_zip(directory: Path) -> bytes:
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_STORED) as zf:
        for p in sorted(directory.iterdir()):
            if p.is_file():
                zf.write(p, arcname=p.name)
    return buffer.getvalue()


def _frame_png(directory: Path, index: int) -> bytes | None:
    files = sorted(p for p in directory.iterdir() if p.is_file())
    if not 0 <= index < len(files):
        return None
    return files[index].read_bytes()


def _synthesize_example(path: Path, seed: int = 7) -> None:
    """Generate a small degraded demo clip so a fresh install has an example."""
    rng = np.random.default_rng(seed)
    h = w = 64
    n = 10
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    frames = []
    for i in range(n):
        base = np.stack([
            0.5 + 0.5 * np.sin(2 * np.pi * (xx / w + i / n)),
            0.5 + 0.5 * np.cos(2 * np.pi * (yy / h - i / n)),
            np.full((h, w), 0.3 + 0.04 * i, dtype=np.float32),
        ], axis=-1).astype(np.float32)
        frames.append(np.clip(base, 0.0, 1.0))
    clean = Clip(np.stack(frames), source_id="demo")
    config = DegradationConfig(seed=int(rng.integers(1 << 31)))
    degraded, _ = degrade_clip(clean, config)
    save_clip(degraded.to_storage(), path)


class Worker(threading.Thread):
    """Single FIFO restoration worker; owns the model exclusively."""

    def __init__(self, store: JobStore, videos: VideoStore, model: RestorationModel,
                 poll_interval: float = 0.05):
        super().__init__(daemon=True)
        self.store = store
        self.videos = videos
        self.model = model
        self.poll_interval = poll_interval
        self._stop_event = threading.Event()  # Thread reserves the _stop name

    def stop(self) -> None:
        self._stop_event.set()

    def run(self) -> None:
        while not self._stop_event.is_set():
            job = self.store.next_queued()
            if job is None:
                self._stop_event.wait(self.poll_interval)
                continue
            self.process(job)

    def process(self, job: RestoreJob) -> None:
        job.state = "running"
        job.progress = 0.0
        self.store.save(job)
        try:
            clip = self.videos.original(job.video_id)

            def on_progress(fraction: float) -> None:
                job.progress = max(job.progress, fraction)
                self.store.save(job)

            restored = restore_video(self.model, clip, progress=on_progress)
            out_dir = self.videos.restored_dir(job.video_id)
            save_clip(restored.to_storage(), out_dir)
            job.state = "done"
            job.progress = 1.0
            job.output_ref = f"{job.video_id}/restored"
            job.finished_at = time.time()
        except Exception as exc:  # job failures must never kill the worker
            logger.exception("job %s failed", job.id)
            job.state = "failed"
            job.error = f"{type(exc).__name__}: {exc}"
            job.finished_at = time.time()
        self.store.save(job)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(settings: ServiceSettings) -> FastAPI:
    """Build the service app; state (stores, model, worker) hangs off app.state."""
    settings.data_dir.mkdir(parents=True, exist_ok=True)
    store = JobStore(settings.data_dir / "jobs")
    videos = VideoStore(settings.data_dir / "videos")
    store.recover()

    if settings.model is not None:
        model = settings.model
    elif settings.weights_path is not None:
        model = load_weights(settings.weights_path)
    else:
        raise InvalidParam("service needs either a model or a weights path")
    model.eval()

    examples_dir = settings.examples_dir or settings.data_dir / "examples"
    examples_dir.mkdir(parents=True, exist_ok=True)
    if not any(p.is_dir() for p in examples_dir.iterdir()):
        _synthesize_example(examples_dir / "demo-tape")

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        if settings.worker:
            app.state.worker = Worker(store, videos, model)
            app.state.worker.start()
        yield
        if app.state.worker is not None:
            app.state.worker.stop()
            app.state.worker.join(timeout=5)

    app = FastAPI(title="tapemend restoration service", lifespan=lifespan)
    app.state.settings = settings
    app.state.store = store
    app.state.videos = videos
    app.state.model = model
    app.state.worker = None

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request: Request, exc: RequestValidationError):
        return _error(400, "malformed request")

    @app.post("/api/videos", status_code=201)
    async def upload_video(file: UploadFile):
        payload = await file.read(settings.max_upload_bytes + 1)
        if len(payload) > settings.max_upload_bytes:
            return _error(413, f"upload exceeds {settings.max_upload_bytes} bytes")
        if zipfile.is_zipfile(io.BytesIO(payload)):
            try:
                clip = _zip_to_clip(payload)
            except (InvalidParam, zipfile.BadZipFile) as exc:
                return _error(415, f"undecodable frame zip: {exc}")
            kind = "zip"
        else:
            import tempfile
            suffix = Path(file.filename or "upload.bin").suffix or ".bin"
            with tempfile.NamedTemporaryFile(suffix=suffix, delete=False) as tmp:
                tmp.write(payload)
                tmp_path = Path(tmp.name)
            try:
                clip = load_clip(tmp_path)
            except TapemendError as exc:
                return _error(415, f"undecodable video: {exc}")
            finally:
                tmp_path.unlink(missing_ok=True)
            kind = "container"
        if len(clip) > settings.max_frames:
            return _error(413, f"clip has {len(clip)} frames, limit {settings.max_frames}")
        video_id = videos.add(clip, kind=kind, filename=file.filename or "")
        return JSONResponse(status_code=201, content={"video_id": video_id})

    @app.get("/api/videos/{video_id}")
    def video_meta(video_id: str):
        if not videos.exists(video_id):
            return _error(404, f"unknown video {video_id}")
        return videos.meta(video_id)

    def _start_job(video_id: str) -> JSONResponse:
        if not settings.allow_duplicate_jobs:
            active = store.active_for_video(video_id)
            if active is not None:
                return _error(409, f"video {video_id} already has active job {active.id}")
        job = RestoreJob(id=uuid.uuid4().hex[:12], video_id=video_id,
                         input_ref=f"{video_id}/original", created_at=time.time())
        store.save(job)
        return JSONResponse(status_code=201, content={"job_id": job.id})

    @app.post("/api/jobs", status_code=201)
    async def create_job(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "request body must be JSON")
        if "example_id" in body:
            example = examples_dir / body["example_id"]
            if not example.is_dir():
                return _error(404, f"unknown example {body['example_id']}")
            clip = load_clip(example)
            video_id = videos.add(clip, kind="zip", filename=body["example_id"])
            return _start_job(video_id)
        video_id = body.get("video_id")
        if not video_id or not videos.exists(video_id):
            return _error(404, f"unknown video {video_id}")
        return _start_job(video_id)

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        job = store.load(job_id)
        if job is None:
            return _error(404, f"unknown job {job_id}")
        return job.to_json()

    def _done_job_for(video_id: str) -> RestoreJob | None:
        done = [j for j in store.all_jobs()
                if j.video_id == video_id and j.state == "done"]
        return done[-1] if done else None

    @app.get("/api/videos/{video_id}/restored")
    def download_restored(video_id: str):
        if not videos.exists(video_id):
            return _error(404, f"unknown video {video_id}")
        if _done_job_for(video_id) is None:
            return _error(409, "restoration job not done")
        restored_dir = videos.restored_dir(video_id)
        meta = videos.meta(video_id)
        if meta["kind"] == "container":
            from .video_io import encode_clip
            try:
                out = videos.video_dir(video_id) / "restored.mp4"
                if not out.exists():
                    encode_clip(load_clip(restored_dir), out)
                return FileResponse(out, media_type="video/mp4",
                                    filename=f"{video_id}_restored.mp4")
            except TapemendError:
                logger.warning("no encoder available, falling back to frame zip")
        return Response(content=_clip_to_zip(restored_dir),
                        media_type="application/zip",
                        headers={"Content-Disposition":
                                 f'attachment; filename="{video_id}_restored.zip"'})

    @app.get("/api/videos/{video_id}/comparison")
    def comparison(video_id: str):
        if not videos.exists(video_id):
            return _error(404, f"unknown video {video_id}")
        if _done_job_for(video_id) is None:
            return _error(409, "restoration job not done")
        meta = videos.meta(video_id)
        pairs = [{"index": i,
                  "original": f"/api/videos/{video_id}/frames/{i}?variant=original",
                  "restored": f"/api/videos/{video_id}/frames/{i}?variant=restored"}
                 for i in range(meta["frames"])]
        return {"original_url": f"/api/videos/{video_id}/frames/0?variant=original",
                "restored_url": f"/api/videos/{video_id}/restored",
                "frames": meta["frames"], "fps": meta["fps"],
                "per_frame_pairs": pairs}

    @app.get("/api/videos/{video_id}/frames/{index}")
    def frame(video_id: str, index: int, variant: str = "original"):
        if not videos.exists(video_id):
            return _error(404, f"unknown video {video_id}")
        if variant not in ("original", "restored"):
            return _error(404, f"unknown variant {variant}")
        directory = (videos.video_dir(video_id) / "original" if variant == "original"
                     else videos.restored_dir(video_id))
        if not directory.is_dir():
            return _error(409, "frames not available yet")
        payload = _frame_png(directory, index)
        if payload is None:
            return _error(404, f"frame {index} out of range")
        return Response(content=payload, media_type="image/png")

    @app.get("/api/examples")
    def list_examples():
        items = []
        for p in sorted(examples_dir.iterdir()):
            if p.is_dir():
                items.append({"example_id": p.name,
                              "title": p.name.replace("-", " ").replace("_", " "),
                              "thumbnail_url": f"/api/examples/{p.name}/thumbnail"})
        return items

    @app.get("/api/examples/{example_id}/thumbnail")
    def example_thumbnail(example_id: str):
        example = examples_dir / example_id
        if not example.is_dir():
            return _error(404, f"unknown example {example_id}")
        payload = _frame_png(example, 0)
        if payload is None:
            return _error(404, "example has no frames")
        return Response(content=payload, media_type="image/png")

    if settings.ui_dir is not None and settings.ui_dir.is_dir():
        app.mount("/", StaticFiles(directory=settings.ui_dir, html=True), name="ui")

    return app


def identity_model(t: int = 5) -> RestorationModel:
    """Zero-residual model (restoration is a no-op); handy for smoke tests.

    Single-stage config, so the spatial granularity is only 8 pixels and
    arbitrary small uploads restore without failing the padding guard."""
    config = ModelConfig(t=t, embed_dim=16, depths=(1,), window=(t, 2, 2))
    return init_parameters(config, seed=0)
