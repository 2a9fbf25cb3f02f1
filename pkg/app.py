from fastapi import FastAPI, Request, HTTPException
from pydantic import BaseModel, Field
from typing import Any, Dict, List, Optional, Union
from contextlib import asynccontextmanager
import atexit
import logging
import os
import time

import numpy as np

import model_config as settings
from model_config import reload_model_config, current_settings
from utils.utils import TrawlkitError, DegenerateEstimateError, resolve_jobs
from utils.series_utils import TimeSeries
from utils.simulator_utils import load_sim_config, simulate
from utils.estimator_utils import SliceEstimator, estimate
from utils.forecast_utils import dm_stars, dm_test, fit_predictor
from utils.startup_banner import VERSION, display_startup_banner, display_shutdown_banner

logger = logging.getLogger(__name__)

# Application state for startup/reload notifications
app_state = {"status": "starting", "message": "Initializing...", "started_at": None}


@asynccontextmanager
async def lifespan(app_instance):
    # Startup
    logger.info("FastAPI app starting up...")
    app_state['started_at'] = time.time()
    try:
        display_startup_banner(settings.HOST_APP, settings.PORT_NUM_APP, resolve_jobs(settings.JOBS or None))
        app_state['status'] = 'ready'
        app_state['message'] = 'Ready'
    except Exception as e:
        logger.error(f"Failed to start: {e}", exc_info=True)
        app_state['status'] = 'error'
        app_state['message'] = f'Startup failed: {e}'
    yield
    # Shutdown
    logger.info("FastAPI app shutting down...")
    app_state['status'] = 'shutting_down'
    app_state['message'] = 'App shutting down'

app = FastAPI(title='trawlkit', version=VERSION, lifespan=lifespan)


class SeriesRequest(BaseModel):
    delta: float
    values: List[float]

    def series(self):
        return TimeSeries(self.delta, np.asarray(self.values, dtype=float))


class EstimateRequest(SeriesRequest):
    max_lag: Optional[int] = None
    beta: float = 0.05


class SliceRequest(SeriesRequest):
    horizons: List[float]
    method: str = 'empirical_acf'


class ForecastRequest(SeriesRequest):
    h_steps: int = 1
    predictor: Union[str, Dict[str, Any]] = 'trawl'


class DmTestRequest(BaseModel):
    loss_a: List[float]
    loss_b: List[float]
    h: int = Field(default=1, ge=1)
    power: Optional[int] = None


def _http_error(e):
    """HTTPException for a library error: 422 for degenerate estimates, 400 otherwise."""
    status_code = 422 if isinstance(e, DegenerateEstimateError) else 400
    return HTTPException(status_code=status_code, detail=f"{type(e).__name__}: {e}")


def _finite_or_none(x):
    x = float(x)
    return x if np.isfinite(x) else None


def _records(frame):
    """JSON-safe records: NaN and inf become null."""
    return [{k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in row.items()}
            for row in frame.to_dict(orient='records')]


def _check_admin_token(token: str = None):
    # token supplied via header X-Admin-Token, compared with env ADMIN_TOKEN
    env_token = os.environ.get('ADMIN_TOKEN')
    if env_token is None:
        # no admin token configured; disallow by default to avoid accidental exposure
        raise HTTPException(status_code=403, detail='Admin actions disabled (no ADMIN_TOKEN set)')
    if token != env_token:
        raise HTTPException(status_code=401, detail='Invalid admin token')
    return True


@app.post('/admin/reload-config')
async def admin_reload_config(request: Request):
    """Reload config/model_config.json. Protected by the ADMIN_TOKEN env var.
    Send header 'X-Admin-Token: <token>' to authenticate. Returns the effective settings on success.
    """
    _check_admin_token(request.headers.get('X-Admin-Token'))
    try:
        reload_model_config()
    except Exception as e:
        raise HTTPException(status_code=500, detail=f'Failed to reload config: {e}')
    return {"status": "ok", "settings": current_settings(), "app_state": app_state}


@app.get('/status')
async def status():
    """Version, uptime and the numerical defaults in effect."""
    started = app_state.get('started_at')
    return {
        **app_state,
        "version": VERSION,
        "uptime_s": time.time() - started if started else 0.0,
        "jobs": resolve_jobs(settings.JOBS or None),
        "precision": settings.PRECISION,
    }


@app.post('/simulate')
def simulate_path(config: Dict[str, Any]):
    """
    Simulates one trawl path.
    Args:
        config (dict): Simulation config in its JSON form, e.g.
            {"trawl": {"kind": "exp", "lambda": 1}, "marginal": {"kind": "negbin", "theta": 0.2},
             "delta": 0.1, "n": 1000, "seed": 7}
    Returns:
        dict: {"delta": float, "values": list}
    """
    try:
        series = simulate(load_sim_config(config))
    except TrawlkitError as e:
        raise _http_error(e)
    return {"delta": series.delta, "values": series.values.tolist()}


@app.post('/estimate')
def estimate_series(request: EstimateRequest):
    """Trawl function, derivative, bias-corrected and variance grids with (1-beta) intervals."""
    try:
        est = estimate(request.series(), max_lag=request.max_lag)
        frame = est.table(request.beta)
    except TrawlkitError as e:
        raise _http_error(e)
    return {"delta": est.delta, "n": est.n, "q_n": est.q_n, "rows": _records(frame)}


@app.post('/slices')
def slices(request: SliceRequest):
    """Leb(A), Leb(A ∩ A_h), Leb(A \\ A_h) and their ratios for each horizon."""
    try:
        estimator = SliceEstimator(request.series())
        rows = []
        for h in request.horizons:
            s = estimator.estimate(h, request.method)
            rows.append({"h": s.h, "method": s.method.value, "leb_a": s.leb_A, "leb_cap": s.leb_cap,
                         "leb_minus": s.leb_minus, "ratio_cap": s.ratio_cap, "ratio_minus": s.ratio_minus,
                         "clamped": s.clamped})
    except TrawlkitError as e:
        raise _http_error(e)
    return {"rows": rows}


@app.post('/forecast')
def forecast(request: ForecastRequest):
    """Point forecast h_steps ahead from the end of the posted series."""
    try:
        fitted = fit_predictor(request.series(), request.predictor)
        value = fitted.forecast(request.h_steps)
    except TrawlkitError as e:
        raise _http_error(e)
    return {"forecast": float(value), "predictor": fitted.predictor.kind, "fallback": fitted.fallback,
            "fallback_reason": fitted.fallback_reason}


@app.post('/dm-test')
def diebold_mariano(request: DmTestRequest):
    """One-sided DM test; the statistic is null when deterministic dominance makes it infinite."""
    try:
        result = dm_test(request.loss_a, request.loss_b, h=request.h, power=request.power)
    except TrawlkitError as e:
        raise _http_error(e)
    return {"statistic": _finite_or_none(result.statistic), "p_value": result.p_value,
            "dominance": result.dominance, "stars": dm_stars(result.p_value)}


# Register shutdown handler
atexit.register(display_shutdown_banner)


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host=settings.HOST_APP, port=settings.PORT_NUM_APP)
