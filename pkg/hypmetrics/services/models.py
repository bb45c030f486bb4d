"""SQLAlchemy models and helpers for the experiment run ledger."""

import json
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from sqlalchemy import Column, DateTime, Integer, String, Text
from sqlalchemy.orm import Session

from .database import Base


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class ExperimentRun(Base):
    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True, index=True)
    command = Column(String, index=True)
    family = Column(String, index=True, default="")
    seed = Column(Integer)
    config_json = Column(Text)
    report_json = Column(Text)
    exit_status = Column(Integer)
    created_at = Column(DateTime, default=_utcnow)

    def summary(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "command": self.command,
            "family": self.family,
            "seed": self.seed,
            "exit_status": self.exit_status,
            "created_at": self.created_at.isoformat() if self.created_at else None,
        }

    def detail(self) -> Dict[str, Any]:
        out = self.summary()
        out["config"] = json.loads(self.config_json)
        out["report"] = json.loads(self.report_json)
        return out


def record_run(db: Session, outcome: Any) -> ExperimentRun:
    """Persist an experiment outcome (anything with the ExperimentOutcome fields)."""
    run = ExperimentRun(
        command=outcome.command,
        family=outcome.family,
        seed=outcome.seed,
        config_json=json.dumps(outcome.config, sort_keys=True),
        report_json=json.dumps(outcome.report, sort_keys=True),
        exit_status=outcome.exit_status,
    )
    db.add(run)
    db.commit()
    db.refresh(run)
    return run


def list_runs(db: Session, limit: int = 100) -> List[ExperimentRun]:
    return db.query(ExperimentRun).order_by(ExperimentRun.id.desc()).limit(limit).all()


def get_run(db: Session, run_id: int) -> Optional[ExperimentRun]:
    return db.get(ExperimentRun, run_id)
