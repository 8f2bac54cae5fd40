"""Run provenance ledger."""
from .models import ArtifactRecord, Base, EventLog, RunRecord, RunStatus
from .service import RunAlreadyClosed, RunLedger, RunNotFound, open_session

__all__ = [
    "ArtifactRecord",
    "Base",
    "EventLog",
    "RunAlreadyClosed",
    "RunLedger",
    "RunNotFound",
    "RunRecord",
    "RunStatus",
    "open_session",
]
