"""
Run ledger: run lifecycle, artifacts and the chained event log.
"""
import pytest

from src.ledger import RunAlreadyClosed, RunLedger, RunNotFound, RunStatus, open_session
from src.utils.integrity import digest_file


def test_run_lifecycle(db_session, tmp_path):
    """A run starts as running and closes with its summary."""
    ledger = RunLedger(db_session)
    run_id = ledger.start_run("generate", "a" * 64, 7, tmp_path)
    run = ledger.runs_for_digest("a" * 64)[0]
    assert run.status == RunStatus.RUNNING.value
    assert run.seed == 7

    ledger.finish_run(run_id, {"records": 12})
    db_session.refresh(run)
    assert run.status == RunStatus.SUCCEEDED.value
    assert run.summary == {"records": 12}
    assert run.finished_at is not None


def test_failed_run_keeps_error(db_session, tmp_path):
    ledger = RunLedger(db_session)
    run_id = ledger.start_run("compare", "b" * 64, 0, tmp_path)
    ledger.fail_run(run_id, "ArtifactNotFound: missing")
    run = ledger.runs_for_digest("b" * 64)[0]
    assert run.status == RunStatus.FAILED.value
    assert "missing" in run.error


def test_closed_run_cannot_close_again(db_session, tmp_path):
    ledger = RunLedger(db_session)
    run_id = ledger.start_run("rollout", "c" * 64, 0, tmp_path)
    ledger.finish_run(run_id, {})
    with pytest.raises(RunAlreadyClosed):
        ledger.fail_run(run_id, "late")


def test_unknown_run(db_session, tmp_path):
    ledger = RunLedger(db_session)
    with pytest.raises(RunNotFound):
        ledger.finish_run(999, {})
    with pytest.raises(RunNotFound):
        ledger.record_artifact(999, "report", tmp_path / "x.csv")


def test_artifact_digest_recorded(db_session, tmp_path):
    ledger = RunLedger(db_session)
    path = tmp_path / "report.csv"
    path.write_text("a,b\n1,2\n")
    run_id = ledger.start_run("compare", "d" * 64, 0, tmp_path)
    sha = ledger.record_artifact(run_id, "report", path)
    assert sha == digest_file(path)
    run = ledger.runs_for_digest("d" * 64)[0]
    assert [(a.kind, a.sha256) for a in run.artifacts] == [("report", sha)]


def test_event_chain_links_every_event(db_session, tmp_path):
    """Each event points at the one recorded before it."""
    ledger = RunLedger(db_session)
    first = ledger.start_run("generate", "e" * 64, 0, tmp_path)
    ledger.finish_run(first, {})
    second = ledger.start_run("train-diffusion", "e" * 64, 0, tmp_path)
    ledger.fail_run(second, "TrainingDiverged")

    chain = ledger.event_chain()
    assert [e.event_type for e in chain] == ["run_started", "run_succeeded", "run_started", "run_failed"]
    assert chain[0].previous_event_id is None
    for before, after in zip(chain, chain[1:]):
        assert after.previous_event_id == before.id
    assert [run.id for run in ledger.runs_for_digest("e" * 64)] == [first, second]


def test_open_session_creates_schema(tmp_path):
    session = open_session(f"sqlite:///{(tmp_path / 'ledger.db').as_posix()}")
    try:
        ledger = RunLedger(session)
        run_id = ledger.start_run("generate", "f" * 64, 0, tmp_path)
        assert ledger.runs_for_digest("f" * 64)[0].id == run_id
    finally:
        session.close()
