"""
FastAPI service wrapping the segmentation pipeline.

Pipeline runs are long, so they are submitted as jobs and polled; synthetic
generation and evaluation are quick enough to answer synchronously.
"""

import threading
import uuid

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import PipelineConfig
from ..evaluate import xor_error
from ..media_io import ClipError, read_ground_truth
from ..pipeline import run_pipeline
from ..synthetic import SceneSpec, write_synthetic
from .models import (ConfigResponse, EvalRequest, EvalResponse, HealthResponse,
                     JobRequest, JobStatus, SynthRequest, SynthResponse)


class JobStore:
    def __init__(self):
        self._jobs = {}
        self._lock = threading.Lock()

    def create(self):
        job_id = uuid.uuid4().hex[:12]
        with self._lock:
            self._jobs[job_id] = JobStatus(job_id=job_id, state="queued")
        return job_id

    def update(self, job_id, **changes):
        with self._lock:
            job = self._jobs[job_id]
            self._jobs[job_id] = job.model_copy(update=changes)

    def get(self, job_id):
        with self._lock:
            return self._jobs.get(job_id)

    def all(self):
        with self._lock:
            return list(self._jobs.values())


def _report_to_response(report):
    return EvalResponse(name=report.name, mean_error=report.mean_error,
                        frame_count=report.frame_count,
                        per_frame_xor=report.per_frame_xor)


def create_app():
    app = FastAPI(title="salvos", version=__version__)
    jobs = JobStore()

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(version=__version__)

    @app.get("/config/defaults", response_model=ConfigResponse)
    def config_defaults():
        return ConfigResponse(
            values={k: str(v) for k, v in PipelineConfig().items()})

    @app.post("/synth", response_model=SynthResponse)
    def synth(request: SynthRequest):
        spec = SceneSpec(width=request.width, height=request.height,
                         frames=request.frames,
                         object_size=(request.object_width, request.object_height),
                         speed=(request.speed_x, request.speed_y),
                         background_textured=request.background_textured,
                         seed=request.seed)
        try:
            frame_dir, truth_dir = write_synthetic(request.output_dir, spec)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return SynthResponse(frame_dir=frame_dir, truth_dir=truth_dir)

    @app.post("/eval", response_model=EvalResponse)
    def evaluate(request: EvalRequest):
        try:
            result = read_ground_truth(request.result_dir)
            truth = read_ground_truth(request.truth_dir)
            report = xor_error(result, truth, name=request.name)
        except (ClipError, ValueError, FileNotFoundError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return _report_to_response(report)

    @app.post("/jobs", response_model=JobStatus, status_code=202)
    def submit_job(request: JobRequest):
        config = PipelineConfig()
        try:
            for key, value in request.overrides.items():
                config.set(key, value)
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        config.threads = request.threads
        job_id = jobs.create()

        def work():
            jobs.update(job_id, state="running")
            try:
                result = run_pipeline(request.input_dir, request.output_dir,
                                      config, truth_dir=request.truth_dir,
                                      debug_dir=request.debug_dir)
            except Exception as exc:  # noqa: BLE001
                jobs.update(job_id, state="failed", error=str(exc))
                return
            jobs.update(job_id, state="done",
                        stage_seconds=result.stage_seconds,
                        warnings=result.warnings,
                        report=(_report_to_response(result.report)
                                if result.report else None))

        threading.Thread(target=work, daemon=True).start()
        return jobs.get(job_id)

    @app.get("/jobs/{job_id}", response_model=JobStatus)
    def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job id")
        return job

    @app.get("/jobs", response_model=list[JobStatus])
    def list_jobs():
        return jobs.all()

    return app
