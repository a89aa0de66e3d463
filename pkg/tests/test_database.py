from typing import Generator

import pytest
from sqlalchemy import create_engine
from sqlalchemy.orm import Session

from ccdist.database import get_db, sql_alchemy_database_url
from ccdist.models import Base, RunRecord

TEST_DB_PATH = "test_ccdist_runs.db"


@pytest.fixture(scope="module")
def test_db():

    """
    This function tests the database engine

    Yields:
    engine: A sqlalchemy engine object

    """
    test_engine = create_engine(f"sqlite:///{TEST_DB_PATH}")
    Base.metadata.create_all(test_engine)

    yield test_engine

    Base.metadata.drop_all(test_engine)


@pytest.fixture(scope="function")
def db_session(test_db: create_engine) -> Generator[Session, None, None]:

    """
    This function provides a session for the run ledger

    Args:
    test_db: A sqlalchemy engine object

    Yields:
    session: A sqlalchemy session object

    """
    with get_db() as session:
        yield session


def test_database_connection(db_session) -> None:

    """
    Test the database connection

    Returns: None

    """
    assert isinstance(db_session, Session)


def test_add_run(db_session) -> None:

    """
    Test adding a run record to the ledger

    Returns: None

    """
    record = RunRecord(
        command="distance",
        group_digest="a" * 64,
        config_json='{"max_k": 8}',
        seed=7,
        tool_version="0.1.0",
        exit_code=0,
        wall_time=0.25,
    )
    db_session.add(record)
    db_session.commit()

    retrieved = db_session.query(RunRecord).filter(RunRecord.seed == 7).first()
    assert retrieved is not None
    assert retrieved.command == "distance"
    assert retrieved.group_digest == "a" * 64
    assert retrieved.exit_code == 0
    assert retrieved.created_at is not None


def test_update_run(db_session) -> None:

    """
    Test updating a run record

    Returns: None

    """
    record = RunRecord(
        command="verify", tool_version="0.1.0", exit_code=0, seed=1101
    )
    db_session.add(record)
    db_session.commit()

    retrieved = db_session.query(RunRecord).filter(RunRecord.seed == 1101).first()
    assert retrieved is not None
    retrieved.exit_code = 2
    db_session.commit()

    updated = db_session.query(RunRecord).filter(RunRecord.seed == 1101).first()
    assert updated.exit_code == 2
    assert updated.command == "verify"


def test_delete_run(db_session) -> None:

    """
    Test deleting a run record

    Returns: None

    """
    record = RunRecord(command="heat", tool_version="0.1.0", exit_code=0, seed=1202)
    db_session.add(record)
    db_session.commit()

    retrieved = db_session.query(RunRecord).filter(RunRecord.seed == 1202).first()
    assert retrieved is not None

    db_session.delete(retrieved)
    db_session.commit()

    deleted = db_session.query(RunRecord).filter(RunRecord.seed == 1202).first()
    assert deleted is None


def test_run_repr(db_session) -> None:

    """
    Test the text form of a run record

    Returns: None

    """
    record = RunRecord(command="sweep", tool_version="0.1.0", exit_code=3, seed=1303)
    db_session.add(record)
    db_session.commit()
    assert repr(record) == (
        f"<RunRecord(id={record.id}, command='sweep', exit_code=3)>"
    )


def test_multiple_runs(db_session) -> None:

    """
    Test adding multiple runs and filtering them by command

    Returns: None

    """
    runs = [
        RunRecord(command="oracle", tool_version="0.1.0", exit_code=code, seed=1400)
        for code in (0, 1, 2)
    ]
    db_session.add_all(runs)
    db_session.commit()

    retrieved = (
        db_session.query(RunRecord)
        .filter(RunRecord.command == "oracle", RunRecord.seed == 1400)
        .all()
    )
    assert len(retrieved) == 3
    assert set(r.exit_code for r in retrieved) == {0, 1, 2}


def test_db_context_manager() -> None:

    """
    Test the database context manager (get_db)

    Returns: None

    """
    with get_db() as db:
        assert isinstance(db, Session)
        assert str(db.bind.url) == sql_alchemy_database_url


def test_db_context_manager_error() -> None:

    """
    Test the database context manager (get_db) with an error

    Returns: None

    """
    with pytest.raises(Exception):
        with get_db() as db:
            assert isinstance(db, Session)
            raise Exception("An error occurred")


def test_empty_database(db_session) -> None:

    """
    Test the ledger is empty after deleting every run

    Returns: None

    """
    db_session.query(RunRecord).delete()
    db_session.commit()
    assert db_session.query(RunRecord).all() == []
