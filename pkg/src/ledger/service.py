"""
Run ledger service.
Records CLI runs, their artifacts and a chained event log. Nothing here feeds back into
the bytes of any artifact.
"""
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from sqlalchemy import create_engine
from sqlalchemy.orm import Session, sessionmaker

from ..utils.integrity import digest_file
from .models import ArtifactRecord, Base, EventLog, RunRecord, RunStatus

logger = logging.getLogger(__name__)


class RunNotFound(LookupError):
    """Raised when a run id is not in the ledger."""
    pass


class RunAlreadyClosed(RuntimeError):
    """Raised when finishing or failing a run that is no longer running."""
    pass


def open_session(url: str) -> Session:
    """Create the schema if needed and return a session bound to `url`."""
    engine = create_engine(url)
    Base.metadata.create_all(engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)()


class RunLedger:
    """
    Provenance ledger for experiment runs.

    Every state change is written as an EventLog row whose `previous_event_id`
    points at the latest event before it, so the log forms a single chain.
    """

    def __init__(self, db: Session):
        self.db = db

    def _latest_event_id(self) -> Optional[int]:
        latest = self.db.query(EventLog).order_by(EventLog.id.desc()).first()
        return latest.id if latest else None

    def _get_run(self, run_id: int) -> RunRecord:
        run = self.db.get(RunRecord, run_id)
        if run is None:
            raise RunNotFound(f"No run with id {run_id}")
        return run

    def record_event(self, event_type: str, payload: Dict[str, Any], run_id: Optional[int] = None) -> int:
        """
        Append an event to the provenance chain.

        Returns:
            The new event id
        """
        event = EventLog(
            run_id=run_id,
            event_type=event_type,
            payload=payload,
            previous_event_id=self._latest_event_id(),
        )
        self.db.add(event)
        self.db.commit()
        return event.id

    def start_run(self, command: str, config_digest: str, seed: int, run_dir: Union[str, Path]) -> int:
        run = RunRecord(command=command, config_digest=config_digest, seed=seed, run_dir=str(run_dir))
        self.db.add(run)
        self.db.commit()
        self.record_event("run_started", {"command": command, "digest": config_digest, "seed": seed},
                          run.id)
        logger.debug("Ledger: run %d started (%s)", run.id, command)
        return run.id

    def record_artifact(self, run_id: int, kind: str, path: Union[str, Path]) -> str:
        """
        Register a written file under a run.

        Returns:
            SHA-256 of the file contents
        """
        self._get_run(run_id)
        sha = digest_file(path)
        self.db.add(ArtifactRecord(run_id=run_id, kind=kind, path=str(path), sha256=sha))
        self.db.commit()
        self.record_event("artifact_written", {"kind": kind, "path": str(path), "sha256": sha}, run_id)
        return sha

    def _close(self, run_id: int, status: RunStatus, summary: Optional[Dict[str, Any]],
               error: Optional[str]) -> None:
        run = self._get_run(run_id)
        if run.status != RunStatus.RUNNING.value:
            raise RunAlreadyClosed(f"Run {run_id} is already {run.status}")
        run.status = status.value
        run.summary = summary
        run.error = error
        run.finished_at = datetime.utcnow()
        self.db.commit()
        self.record_event(f"run_{status.value}", {"error": error} if error else {}, run_id)

    def finish_run(self, run_id: int, summary: Dict[str, Any]) -> None:
        self._close(run_id, RunStatus.SUCCEEDED, summary, None)

    def fail_run(self, run_id: int, error: str) -> None:
        self._close(run_id, RunStatus.FAILED, None, error)

    def runs_for_digest(self, config_digest: str) -> List[RunRecord]:
        return (self.db.query(RunRecord)
                .filter(RunRecord.config_digest == config_digest)
                .order_by(RunRecord.id)
                .all())

    def event_chain(self) -> List[EventLog]:
        return self.db.query(EventLog).order_by(EventLog.id).all()
