import logging
import os
import time

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from . import __version__
from .schemas import CalibrationRequest, CheckResponse, ResidualsModel, ScenarioConfig
from .wave_core.constants import DEFAULTS
from .wave_core.errors import WaveCoreError
from .wave_core.harness import calibrate_beta, run_scenario
from .wave_core.results import summarize
from .wave_core.settings import init_logging

logger = logging.getLogger(__name__)

app = FastAPI(title="tdnlse", version=__version__)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.on_event("startup")
def _startup():
    init_logging(os.environ.get("WAVE_LOG_LEVEL", "INFO"))


# -----------------------------
# Request logging
# -----------------------------
@app.middleware("http")
async def log_requests(request: Request, call_next):
    start = time.time()
    logger.info("INCOMING %s %s", request.method, request.url.path)

    response = await call_next(request)

    ms = int((time.time() - start) * 1000)
    logger.info("STATUS %s ms=%d path=%s", response.status_code, ms, request.url.path)
    return response


def _raise_http(e: Exception) -> None:
    # bad input is the caller's problem; solver failures on valid input are 422
    if isinstance(e, ValueError):
        raise HTTPException(status_code=400, detail=str(e))
    raise HTTPException(status_code=422, detail=str(e))


@app.get("/")
def home():
    return {"status": "wave dynamics API is running"}


@app.api_route("/", methods=["HEAD"], include_in_schema=False)
def home_head():
    return Response(status_code=200)


@app.get("/version")
def version():
    return {"version": __version__}


@app.post("/run")
def run(config: ScenarioConfig):
    try:
        result = run_scenario(config)
    except (WaveCoreError, ValueError) as e:
        _raise_http(e)
    return summarize(result)


@app.post("/check", response_model=CheckResponse)
def check(config: ScenarioConfig):
    try:
        result = run_scenario(config)
    except (WaveCoreError, ValueError) as e:
        _raise_http(e)

    residuals = result.residual_max.to_json()
    passed = not result.aborted and all(v is not None and v < DEFAULTS.RESIDUAL_TOL for v in residuals.values())
    return CheckResponse(
        residuals=ResidualsModel(**residuals),
        tolerance=DEFAULTS.RESIDUAL_TOL,
        passed=passed,
        max_norm_drift=result.max_norm_drift,
        aborted=result.aborted,
    )


@app.post("/calibrate")
def calibrate(request: CalibrationRequest):
    try:
        report = calibrate_beta(request.config, request.betas)
    except (WaveCoreError, ValueError) as e:
        _raise_http(e)
    return report.to_json()
