"""
Database models for the run ledger.
Every CLI invocation, the artifacts it writes and its lifecycle events are persisted here.
"""
from datetime import datetime
from enum import Enum

from sqlalchemy import JSON, Column, DateTime, ForeignKey, Integer, String, Text
from sqlalchemy.orm import declarative_base, relationship

Base = declarative_base()


class RunStatus(str, Enum):
    """Lifecycle of one CLI run."""
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


# =============================================================================
# Runs and artifacts
# =============================================================================

class RunRecord(Base):
    """One invocation of a CLI subcommand."""
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True)
    command = Column(String(64), nullable=False)
    config_digest = Column(String(64), nullable=False, index=True)
    seed = Column(Integer, nullable=False)
    run_dir = Column(String(500), nullable=False)
    status = Column(String(20), default=RunStatus.RUNNING.value)
    summary = Column(JSON, nullable=True)
    error = Column(Text, nullable=True)
    started_at = Column(DateTime, default=datetime.utcnow, index=True)
    finished_at = Column(DateTime, nullable=True)

    artifacts = relationship("ArtifactRecord", back_populates="run")


class ArtifactRecord(Base):
    """A file written by a run, with its content digest."""
    __tablename__ = "artifacts"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False)
    kind = Column(String(64), nullable=False)  # e.g. "dataset", "denoiser", "report"
    path = Column(String(500), nullable=False)
    sha256 = Column(String(64), nullable=False)
    created_at = Column(DateTime, default=datetime.utcnow)

    run = relationship("RunRecord", back_populates="artifacts")


# =============================================================================
# Provenance
# =============================================================================

class EventLog(Base):
    """Append-only event log; each event points at its predecessor."""
    __tablename__ = "event_log"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=True, index=True)
    event_type = Column(String(100), nullable=False, index=True)
    payload = Column(JSON, nullable=False)
    timestamp = Column(DateTime, default=datetime.utcnow, index=True)
    previous_event_id = Column(Integer, ForeignKey("event_log.id"), nullable=True)
