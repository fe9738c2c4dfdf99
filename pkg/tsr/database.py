"""
Run ledger: engine and session management

Objectives:
- Keep a history of pipeline runs (seed, status, energies) across experiments
- Stay fully optional: no engine is created unless a URL is configured
- Never write into run output directories
"""

from __future__ import annotations

import logging
import os
from typing import Generator, Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.exc import OperationalError, SQLAlchemyError
from sqlalchemy.orm import Session, declarative_base, sessionmaker

logger = logging.getLogger("tsr.database")

# ------------------------------------------------------------------------------
# Declarative base
# ------------------------------------------------------------------------------
Base = declarative_base()

# ------------------------------------------------------------------------------
# Engine state (configured lazily)
# ------------------------------------------------------------------------------
_engine: Optional[Engine] = None
_session_factory: Optional[sessionmaker] = None


def configure(url: Optional[str] = None) -> Optional[Engine]:
    """
    Bind the ledger to ``url`` (default: TSR_DATABASE_URL).

    Returns None and disables the ledger when no URL is available.
    """
    global _engine, _session_factory

    url = url or os.getenv("TSR_DATABASE_URL")
    if _engine is not None:
        _engine.dispose()
    _engine, _session_factory = None, None
    if not url:
        logger.debug("Run ledger disabled")
        return None

    try:
        _engine = create_engine(url, pool_pre_ping=True, future=True)
        _session_factory = sessionmaker(
            bind=_engine,
            autoflush=False,
            autocommit=False,
            expire_on_commit=False,
            class_=Session,
        )
        init_db()
        logger.info("Run ledger initialized")
    except SQLAlchemyError as exc:
        logger.critical("Run ledger initialization failed", exc_info=exc)
        raise
    return _engine


def enabled() -> bool:
    return _engine is not None


def init_db() -> None:
    """Create the ledger schema."""
    if _engine is None:
        return
    from tsr import models  # noqa: F401

    Base.metadata.create_all(bind=_engine)


# ------------------------------------------------------------------------------
# Sessions
# ------------------------------------------------------------------------------
def get_db() -> Generator[Optional[Session], None, None]:
    """
    FastAPI dependency providing a ledger session (None when disabled).

    The caller commits; operational errors reset the pool before re-raising.
    """
    if _session_factory is None:
        yield None
        return

    db: Session = _session_factory()
    try:
        yield db
    except OperationalError as exc:
        logger.error("Ledger connection lost, resetting pool", exc_info=exc)
        db.rollback()
        if _engine is not None:
            _engine.dispose()
        raise
    except SQLAlchemyError as exc:
        logger.error("Unhandled ledger error", exc_info=exc)
        db.rollback()
        raise
    finally:
        db.close()


def record_run(
    command: str,
    master_seed: int,
    status: str,
    exit_code: int,
    target: Optional[str] = None,
    energy_start: Optional[float] = None,
    energy_final: Optional[float] = None,
    accepted_steps: Optional[int] = None,
) -> None:
    """Append one run to the ledger; a no-op when the ledger is disabled."""
    if _session_factory is None:
        return
    from tsr.models import RunRecord

    with _session_factory() as db:
        try:
            db.add(
                RunRecord(
                    command=command,
                    master_seed=master_seed,
                    target=target,
                    status=status,
                    exit_code=exit_code,
                    energy_start=energy_start,
                    energy_final=energy_final,
                    accepted_steps=accepted_steps,
                )
            )
            db.commit()
        except SQLAlchemyError as exc:
            db.rollback()
            logger.error("Could not record run", exc_info=exc)


def list_runs(db: Session) -> list[dict]:
    from tsr.models import RunRecord

    return [record.as_dict() for record in db.query(RunRecord).order_by(RunRecord.id).all()]
