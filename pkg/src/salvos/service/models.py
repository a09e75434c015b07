"""Pydantic request/response models for the HTTP service."""

from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class SynthRequest(BaseModel):
    output_dir: str
    width: int = 100
    height: int = 100
    frames: int = 30
    object_width: int = 20
    object_height: int = 20
    speed_x: float = 2.0
    speed_y: float = 0.0
    background_textured: bool = True
    seed: int = 7


class SynthResponse(BaseModel):
    frame_dir: str
    truth_dir: str


class EvalRequest(BaseModel):
    result_dir: str
    truth_dir: str
    name: str = "sequence"


class EvalResponse(BaseModel):
    name: str
    mean_error: float
    frame_count: int
    per_frame_xor: List[int]


class JobRequest(BaseModel):
    input_dir: str
    output_dir: str
    truth_dir: Optional[str] = None
    debug_dir: Optional[str] = None
    threads: int = 1
    overrides: Dict[str, str] = Field(default_factory=dict,
                                      description="dotted config key -> value")


class JobStatus(BaseModel):
    job_id: str
    state: str                      # queued | running | done | failed
    error: Optional[str] = None
    stage_seconds: Dict[str, float] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)
    report: Optional[EvalResponse] = None


class ConfigResponse(BaseModel):
    values: Dict[str, str]
