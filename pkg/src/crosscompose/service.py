"""Job-oriented HTTP service exposing composition to scripts and the studio UI.

Artifacts are stored under a content-addressed run directory keyed by the job
config hash, so resubmitting an identical job is served from cache unless the
client forces a rerun. One bounded worker pool owns the backbone; request
handling stays concurrent while job execution is serialized per worker.
"""

from __future__ import annotations

import json
import os
import queue
import tempfile
import threading
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.responses import FileResponse, JSONResponse

from . import imageio
from .backbone import load_backbone
from .core import MaskPlane, PipelineConfig, Placement
from .integrator.mlp import IntegratorModel
from .pipeline import CompositionJob, compose_detailed

JOB_STATES = ("queued", "running", "done", "failed")


class JobCancelled(Exception):
    pass


@dataclass
class JobRecord:
    job_id: str
    state: str = "queued"
    config_hash: str = ""
    progress: dict = field(default_factory=lambda: {"stage": "queued", "step": 0})
    result_paths: dict = field(default_factory=dict)
    error: str | None = None
    cancel_requested: bool = False

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "state": self.state,
            "config_hash": self.config_hash,
            "progress": self.progress,
            "result_paths": self.result_paths,
            "error": self.error,
        }


class JobManager:
    """FIFO queue + worker pool + in-memory record store."""

    def __init__(self, backbone, model: IntegratorModel, runs_dir: Path, workers: int = 1, queue_limit: int = 8):
        self.backbone = backbone
        self.model = model
        self.runs_dir = runs_dir
        self.queue_limit = queue_limit
        self.records: dict[str, JobRecord] = {}
        self.jobs: dict[str, CompositionJob] = {}
        self.lock = threading.Lock()
        self.q: queue.Queue = queue.Queue()
        self.workers = [threading.Thread(target=self._worker, daemon=True) for _ in range(workers)]

    def start(self):
        for w in self.workers:
            w.start()

    def stop(self):
        for _ in self.workers:
            self.q.put(None)
        for w in self.workers:
            w.join(timeout=5)

    def pending(self) -> int:
        with self.lock:
            return sum(1 for r in self.records.values() if r.state in ("queued", "running"))

    def run_dir(self, config_hash: str) -> Path:
        return self.runs_dir / config_hash

    def submit(self, job: CompositionJob, force: bool = False) -> JobRecord:
        config_hash = job.config_hash(extra={"backbone": self.backbone.profile.name})
        record = JobRecord(job_id=uuid.uuid4().hex[:12], config_hash=config_hash)
        cached = self.run_dir(config_hash) / "result.png"
        if cached.exists() and not force:
            record.state = "done"
            record.progress = {"stage": "cached", "step": 0}
            record.result_paths = self._artifact_paths(config_hash)
            with self.lock:
                self.records[record.job_id] = record
            return record
        if self.pending() >= self.queue_limit:
            raise HTTPException(status_code=503, detail="backbone busy: queue limit reached")
        with self.lock:
            self.records[record.job_id] = record
            self.jobs[record.job_id] = job
        self.q.put(record.job_id)
        return record

    def cancel(self, job_id: str) -> JobRecord:
        with self.lock:
            record = self.records.get(job_id)
            if record is None:
                raise HTTPException(status_code=404, detail="unknown job")
            if record.state in ("done", "failed"):
                raise HTTPException(status_code=409, detail=f"job already {record.state}")
            if record.state == "queued":
                record.state = "failed"
                record.error = "cancelled"
                record.progress = {"stage": "cancelled", "step": 0}
            else:
                record.cancel_requested = True
            return record

    def _artifact_paths(self, config_hash: str) -> dict:
        base = self.run_dir(config_hash)
        return {
            "result": str(base / "result.png"),
            "preview": str(base / "preview.png"),
            "trace": str(base / "trace.jsonl"),
        }

    def _worker(self):
        while True:
            job_id = self.q.get()
            if job_id is None:
                return
            with self.lock:
                record = self.records.get(job_id)
                if record is None or record.state != "queued":
                    continue  # cancelled while queued; backbone never touched
                record.state = "running"
                job = self.jobs[job_id]

            def on_progress(stage: str, step: int, _record=record):
                _record.progress = {"stage": stage, "step": step}
                if _record.cancel_requested:
                    raise JobCancelled()

            try:
                run = compose_detailed(job, self.backbone, self.model, on_progress=on_progress)
                base = self.run_dir(run.config_hash)
                base.mkdir(parents=True, exist_ok=True)
                imageio.save_image(run.image, base / "result.png")
                imageio.save_image(run.preview, base / "preview.png")
                (base / "trace.jsonl").write_text(run.trace.to_jsonl())
                (base / "config.json").write_text(json.dumps(run.effective_cfg.to_dict(), indent=2))
                with self.lock:
                    record.result_paths = self._artifact_paths(run.config_hash)
                    record.progress = {"stage": "done", "step": 0}
                    record.state = "done"
            except JobCancelled:
                with self.lock:
                    record.state = "failed"
                    record.error = "cancelled"
            except Exception as e:  # noqa: BLE001 - job failure must not kill the worker
                # the cancellation signal may surface wrapped in a stage error
                with self.lock:
                    record.state = "failed"
                    record.error = "cancelled" if record.cancel_requested else str(e)


def _parse_params(params: str) -> tuple[PipelineConfig, str | None]:
    try:
        payload = json.loads(params) if params else {}
    except json.JSONDecodeError as e:
        raise HTTPException(status_code=400, detail=f"params is not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise HTTPException(status_code=400, detail="params must be a JSON object")
    prompt = payload.pop("prompt", None)
    try:
        cfg = PipelineConfig.from_dict(payload)
    except (ValueError, TypeError) as e:
        raise HTTPException(status_code=400, detail=f"invalid config: {e}") from e
    return cfg, prompt


def create_app(
    backbone=None,
    model: IntegratorModel | None = None,
    workers: int | None = None,
    queue_limit: int | None = None,
    runs_dir: str | Path | None = None,
) -> FastAPI:
    backbone = backbone or load_backbone(os.environ.get("CROSSCOMPOSE_BACKBONE", "toy"))
    if model is None:
        p = backbone.profile
        model_path = os.environ.get("CROSSCOMPOSE_MODEL")
        if model_path and Path(model_path).exists():
            model = IntegratorModel.load(model_path)
        else:
            # zero model = additive content + style fallback
            model = IntegratorModel.zero(p.token_count, p.token_dim, max(p.token_dim, 64))
    workers = workers if workers is not None else int(os.environ.get("CROSSCOMPOSE_WORKERS", "1"))
    queue_limit = queue_limit if queue_limit is not None else int(os.environ.get("CROSSCOMPOSE_QUEUE_LIMIT", "8"))
    runs = Path(runs_dir or os.environ.get("CROSSCOMPOSE_RUNS_DIR") or tempfile.mkdtemp(prefix="crosscompose-runs-"))
    runs.mkdir(parents=True, exist_ok=True)

    manager = JobManager(backbone, model, runs, workers=workers, queue_limit=queue_limit)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        manager.start()
        yield
        manager.stop()

    app = FastAPI(title="crosscompose", version="0.1.0", lifespan=lifespan)
    app.state.manager = manager

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok", "backbone": backbone.profile.name}

    @app.get("/v1/presets")
    def presets():
        return {"config": PipelineConfig().to_dict(), "backbone": backbone.profile.name}

    @app.post("/v1/jobs")
    async def submit_job(
        bg: UploadFile = File(...),
        fg: UploadFile = File(...),
        fg_mask: UploadFile = File(...),
        bg_box: UploadFile | None = File(None),
        offset_x: int = Form(0),
        offset_y: int = Form(0),
        scale: float = Form(1.0),
        params: str = Form("{}"),
        force: bool = Form(False),
    ):
        cfg, prompt = _parse_params(params)
        try:
            bg_img = imageio.load_image_bytes(await bg.read())
            fg_img = imageio.load_image_bytes(await fg.read())
            mask = imageio.load_mask_bytes(await fg_mask.read(), "fg_object")
            box: MaskPlane | None = None
            if bg_box is not None:
                box = imageio.load_mask_bytes(await bg_box.read(), "bg_box")
            placement = Placement(offset_x=offset_x, offset_y=offset_y, scale=scale)
            job = CompositionJob(
                bg=bg_img, fg=fg_img, fg_mask=mask, placement=placement, cfg=cfg, bg_box=box, prompt=prompt
            )
            job.validate()
        except HTTPException:
            raise
        except Exception as e:  # noqa: BLE001 - any malformed payload is a 400
            raise HTTPException(status_code=400, detail=f"invalid payload: {e}") from e
        record = manager.submit(job, force=force)
        return {"job_id": record.job_id, "config_hash": record.config_hash, "state": record.state}

    def _get_record(job_id: str) -> JobRecord:
        with manager.lock:
            record = manager.records.get(job_id)
        if record is None:
            raise HTTPException(status_code=404, detail="unknown job")
        return record

    @app.get("/v1/jobs/{job_id}")
    def job_status(job_id: str):
        return _get_record(job_id).to_dict()

    @app.get("/v1/jobs/{job_id}/result")
    def job_result(job_id: str):
        record = _get_record(job_id)
        if record.state != "done":
            raise HTTPException(status_code=404, detail=f"job is {record.state}, no result yet")
        return FileResponse(record.result_paths["result"], media_type="image/png")

    @app.get("/v1/jobs/{job_id}/preview")
    def job_preview(job_id: str):
        record = _get_record(job_id)
        path = record.result_paths.get("preview")
        if not path or not Path(path).exists():
            raise HTTPException(status_code=404, detail="preview not available")
        return FileResponse(path, media_type="image/png")

    @app.delete("/v1/jobs/{job_id}")
    def cancel_job(job_id: str):
        record = manager.cancel(job_id)
        return JSONResponse(record.to_dict())

    return app
