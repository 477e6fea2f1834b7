"""Studio HTTP service.

Small JSON API over the stylization pipelines, plus an async job queue for
reference embedding (the one slow operation). Jobs are deduplicated by
(style_id, image content hash): re-posting the same reference returns the
same job, and an embedding already on disk completes with zero optimization
steps.

Images travel as base64 PNG strings. Error mapping: 400 malformed input,
404 unknown style/job/reference, 409 cross-style reference use, 503 queue
full.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .encoder import Encoder
from .errors import FacestyleError, InvalidImageError, InvalidParameterError
from .generator import Generator
from .images import b64_to_image, image_hash, image_to_b64, prepare_input
from .inversion import SefaBasis, embed_reference, sefa_basis
from .latent import Space
from .stylize import MixSpec, StylePolicy, apply_mix, stylize_general
from .workspace import Workspace

JOB_ORDER = {"queued": 0, "running": 1, "done": 2, "failed": 2}


class Job:
    """Forward-only status machine, safe to poke from the worker thread."""

    def __init__(self, job_id: str, kind: str):
        self.id = job_id
        self.kind = kind
        self.status = "queued"
        self.progress = 0.0
        self.result_id: str | None = None
        self.error: str | None = None
        self.meta: dict = {}
        self._lock = threading.Lock()

    def advance(self, status: str) -> None:
        with self._lock:
            if JOB_ORDER[status] < JOB_ORDER[self.status]:
                raise RuntimeError(f"job {self.id}: cannot move {self.status} -> {status}")
            self.status = status

    def set_progress(self, value: float) -> None:
        with self._lock:
            self.progress = max(self.progress, min(1.0, value))

    def finish(self, result_id: str, meta: dict) -> None:
        with self._lock:
            self.result_id = result_id
            self.meta.update(meta)
            self.progress = 1.0
            self.status = "done"

    def fail(self, error: str) -> None:
        with self._lock:
            self.error = error
            self.status = "failed"

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "id": self.id,
                "kind": self.kind,
                "status": self.status,
                "progress": self.progress,
                "result_id": self.result_id,
                "error": self.error,
                "meta": dict(self.meta),
            }


@dataclass
class StyleContext:
    policy: StylePolicy
    gen: Generator
    basis: SefaBasis


class Studio:
    def __init__(self, ws: Workspace, worker_count: int = 1, max_pending: int = 4):
        self.ws = ws
        service_cfg = ws.section("service")
        self.ref_iterations = int(service_cfg.get("reference_iterations", 300))
        self.ref_k = int(service_cfg.get("reference_k", 64))
        self.encoder: Encoder = ws.load_encoder_for(Space.W)
        self.nets = ws.feature_nets()
        self.cache = ws.reference_cache()
        self.styles: dict[str, StyleContext] = {}
        for style_id in ws.list_styles():
            policy = ws.load_policy(style_id)
            gen = ws.load_style_generator(style_id)
            gen.ensure_w_mean()
            self.styles[style_id] = StyleContext(policy, gen, sefa_basis(gen, self.ref_k))
        self.jobs: dict[str, Job] = {}
        self.dedupe: dict[tuple[str, str], str] = {}
        self.lock = threading.Lock()
        self.max_pending = max_pending
        self.executor = ThreadPoolExecutor(max_workers=worker_count)
        self._job_counter = 0

    def style(self, style_id: str) -> StyleContext:
        ctx = self.styles.get(style_id)
        if ctx is None:
            raise HTTPException(404, f"unknown style {style_id!r}")
        return ctx

    def new_job_id(self) -> str:
        self._job_counter += 1
        return f"job-{self._job_counter:06d}"

    def pending_count(self) -> int:
        return sum(1 for j in self.jobs.values() if j.status in ("queued", "running"))

    def submit_reference(self, style_id: str, image) -> str:
        ctx = self.style(style_id)
        img_hash = image_hash(image)
        key = (style_id, img_hash)
        with self.lock:
            existing = self.dedupe.get(key)
            if existing is not None:
                return existing
            if self.pending_count() >= self.max_pending:
                raise HTTPException(503, "reference queue is full, retry later")
            job = Job(self.new_job_id(), "reference")
            self.jobs[job.id] = job
            self.dedupe[key] = job.id

        def work() -> None:
            job.advance("running")
            try:
                total = self.ref_iterations
                emb, steps = embed_reference(
                    image,
                    ctx.gen,
                    style_id,
                    self.cache,
                    self.nets,
                    basis=ctx.basis,
                    iterations=total,
                    on_step=lambda s, _loss: job.set_progress((s + 1) / total),
                )
                job.finish(emb.reference_id, {"optimization_steps": steps})
            except Exception as exc:  # noqa: BLE001 - job must record any failure
                job.fail(str(exc))
                with self.lock:
                    self.dedupe.pop(key, None)

        self.executor.submit(work)
        return job.id


class StylizeRequest(BaseModel):
    image_png_b64: str
    style_id: str
    psi: float | None = None


class MixRequest(BaseModel):
    image_png_b64: str
    style_id: str
    mode: str
    k: int
    psi: float | None = None
    seed: int | None = None
    reference_id: str | None = None


class ReferenceRequest(BaseModel):
    image_png_b64: str
    style_id: str


def _decode_input(b64: str, resolution: int):
    try:
        return prepare_input(b64_to_image(b64), resolution)
    except InvalidImageError as exc:
        raise HTTPException(400, f"bad image payload: {exc}") from exc


def create_app(
    ws: Workspace,
    worker_count: int = 1,
    max_pending: int = 4,
    static_dir: str | Path | None = None,
) -> FastAPI:
    studio = Studio(ws, worker_count=worker_count, max_pending=max_pending)
    app = FastAPI(title="facestyle studio")
    app.state.studio = studio

    @app.exception_handler(RequestValidationError)
    async def on_validation(_req: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(InvalidParameterError)
    async def on_param(_req: Request, exc: InvalidParameterError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(FacestyleError)
    async def on_domain_error(_req: Request, exc: FacestyleError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/api/styles")
    def list_styles():
        out = []
        for style_id in sorted(studio.styles):
            ctx = studio.styles[style_id]
            out.append(
                {
                    "style_id": style_id,
                    "truncation_psi": ctx.policy.truncation_psi,
                    "layer_count": ctx.gen.layer_count,
                    "default_mix_indices": list(ctx.policy.default_mix_indices),
                }
            )
        return out

    @app.post("/api/stylize")
    def do_stylize(req: StylizeRequest):
        ctx = studio.style(req.style_id)
        psi = req.psi if req.psi is not None else ctx.policy.truncation_psi
        if not (0.0 <= psi <= 1.0):
            raise HTTPException(400, f"psi must be in [0, 1], got {psi}")
        image = _decode_input(req.image_png_b64, ctx.gen.config.resolution)
        out = stylize_general(image, studio.encoder, ctx.gen, psi)
        return {"image_png_b64": image_to_b64(out), "style_id": req.style_id}

    @app.post("/api/mix")
    def do_mix(req: MixRequest):
        ctx = studio.style(req.style_id)
        psi = req.psi if req.psi is not None else ctx.policy.truncation_psi
        image = _decode_input(req.image_png_b64, ctx.gen.config.resolution)
        spec = MixSpec(
            k=req.k,
            tail_source=req.mode,
            truncation_psi=psi,
            seed=req.seed,
            reference_id=req.reference_id,
        )
        reference = None
        if req.mode == "reference":
            ref_style, _, ref_hash = req.reference_id.partition("/")
            if ref_style != req.style_id:
                raise HTTPException(
                    409,
                    f"reference {req.reference_id!r} belongs to style {ref_style!r}",
                )
            reference = studio.cache.get(req.style_id, ref_hash)
            if reference is None:
                raise HTTPException(404, f"unknown reference {req.reference_id!r}")
        out = apply_mix(image, studio.encoder, ctx.gen, spec, reference)
        return {"image_png_b64": image_to_b64(out), "style_id": req.style_id}

    @app.post("/api/reference")
    def post_reference(req: ReferenceRequest):
        ctx = studio.style(req.style_id)
        image = _decode_input(req.image_png_b64, ctx.gen.config.resolution)
        job_id = studio.submit_reference(req.style_id, image)
        return {"job_id": job_id}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        job = studio.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id!r}")
        return job.to_dict()

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="static")

    return app
