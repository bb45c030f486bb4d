from typing import Any, Dict, List, Optional, Union
import logging

from fastapi import Depends, FastAPI, HTTPException, Query
from pydantic import BaseModel, ConfigDict, Field
from sqlalchemy.orm import Session

from hypmetrics import __version__
from hypmetrics.app.experiments import ExperimentConfig, run
from hypmetrics.services import models
from hypmetrics.services.database import SessionLocal, engine
from hypmetrics.services.errors import HypMetricsError
from hypmetrics.services.families import (
    Family,
    MetricFamily,
    bound_table,
    certified_gromov_bound,
    comparison_functional,
    rho,
)


models.Base.metadata.create_all(bind=engine)


def get_db():
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()


app = FastAPI(title="hypmetrics", version=__version__)
logger = logging.getLogger("uvicorn.error")


class EvalRequest(BaseModel):
    """One pair: either ``d`` or the coordinates ``x`` and ``y``, plus both weights."""

    model_config = ConfigDict(allow_inf_nan=False)

    family: str = "go"
    c: Optional[float] = Field(default=None, gt=0)
    d: Optional[float] = Field(default=None, ge=0)
    x: Optional[Union[float, List[float]]] = None
    y: Optional[Union[float, List[float]]] = None
    fx: float
    fy: float


@app.get("/bounds")
def get_bounds(c: float = Query(2.0, gt=0)) -> Dict[str, Any]:
    """Certified Gromov constants and dilatation limits for every family."""
    return {"c": c, "bounds": bound_table(c)}


@app.post("/eval")
def evaluate(req: EvalRequest) -> Dict[str, Any]:
    try:
        family = MetricFamily.parse(req.family, req.c)
        d = req.d
        if d is None:
            if req.x is None or req.y is None:
                raise HTTPException(status_code=400, detail="Give d or both x and y")
            xs = req.x if isinstance(req.x, list) else [req.x]
            ys = req.y if isinstance(req.y, list) else [req.y]
            if len(xs) != len(ys):
                raise HTTPException(status_code=400, detail="x and y must have the same dimension")
            d = sum((a - b) ** 2 for a, b in zip(xs, ys)) ** 0.5
        out = {
            "family": family.as_dict(),
            "d": d,
            "value": rho(family, d, req.fx, req.fy),
            "certified_bound": certified_gromov_bound(family),
        }
        if family.tag is not Family.GO:
            out["functional"] = comparison_functional(family, d, req.fx, req.fy)
        return out
    except HypMetricsError as e:
        raise HTTPException(status_code=400, detail=str(e))


@app.post("/experiments")
def run_experiment(config: ExperimentConfig, db: Session = Depends(get_db)) -> Dict[str, Any]:
    """Run an experiment, store it in the ledger and return its report."""
    try:
        outcome = run(config.confined_to_specs())
    except HypMetricsError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except OSError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.exception("Experiment failed")
        raise HTTPException(status_code=500, detail=str(e))
    stored = models.record_run(db, outcome)
    return {"run_id": stored.id, "exit_status": outcome.exit_status, "report": outcome.report}


@app.get("/runs")
def list_runs(limit: int = Query(100, ge=1, le=1000), db: Session = Depends(get_db)):
    return {"runs": [r.summary() for r in models.list_runs(db, limit)]}


@app.get("/runs/{run_id}")
def get_run(run_id: int, db: Session = Depends(get_db)):
    stored = models.get_run(db, run_id)
    if not stored:
        raise HTTPException(status_code=404, detail="Run not found")
    return stored.detail()
