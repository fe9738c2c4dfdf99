"""
Pytest configuration and shared fixtures
Two-stage statistical reconstruction
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import AsyncGenerator, Callable, Generator

import httpx
import numpy as np
import pytest
import pytest_asyncio

from tsr import database, metrics
from tsr.config import RunConfig
from tsr.grid import BinaryImage
from tsr.pipeline import generate_target_image

# ------------------------------------------------------------------------------
# Global configuration
# ------------------------------------------------------------------------------
FIXTURES: Path = Path(__file__).parent / "fixtures"
HTTP_TIMEOUT: float = 60.0

logger = logging.getLogger("pytest-tsr")


# ------------------------------------------------------------------------------
# Images
# ------------------------------------------------------------------------------
@pytest.fixture(scope="session")
def fixture_path() -> Path:
    """Hand-made 32×32 PBM whose cluster statistics are listed in its header."""
    return FIXTURES / "fixture_32.pbm"


@pytest.fixture(scope="function")
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def checkerboard() -> BinaryImage:
    rows = ["".join("1" if (r + c) % 2 == 0 else "0" for c in range(4)) for r in range(4)]
    return BinaryImage.from_rows(rows)


@pytest.fixture(scope="session")
def small_target() -> BinaryImage:
    """24×24 synthetic target of five random polyominoes."""
    return generate_target_image(24, clusters=5, min_area=3, max_area=9, seed=11)


@pytest.fixture(scope="session")
def small_target_path(tmp_path_factory: pytest.TempPathFactory, small_target: BinaryImage) -> Path:
    from tsr.formats import write_pbm

    return write_pbm(small_target, tmp_path_factory.mktemp("targets") / "small_target.pbm")


# ------------------------------------------------------------------------------
# Run configuration
# ------------------------------------------------------------------------------
@pytest.fixture(scope="function")
def make_config(tmp_path: Path) -> Callable[..., RunConfig]:
    """
    RunConfig factory writing into a fresh directory.
    Budgets are reduced so stage runs stay short.
    """

    def _make(**overrides) -> RunConfig:
        values = {
            "out_dir": tmp_path / "out",
            "budget_factor": 100,
            "restart_cap": 8,
            "starts": 3,
            "max_loops": 4,
        }
        values.update(overrides)
        return RunConfig(**values)

    return _make


# ------------------------------------------------------------------------------
# Metrics and ledger isolation
# ------------------------------------------------------------------------------
@pytest.fixture(autouse=True)
def clean_metrics() -> Generator[None, None, None]:
    metrics.reset_metrics()
    yield
    metrics.reset_metrics()


@pytest.fixture(autouse=True)
def ledger_disabled(monkeypatch: pytest.MonkeyPatch) -> Generator[None, None, None]:
    """Tests start without a run ledger unless they opt in."""
    monkeypatch.delenv("TSR_DATABASE_URL", raising=False)
    database.configure()
    yield
    database.configure()


@pytest.fixture(scope="function")
def ledger(tmp_path: Path) -> Generator[str, None, None]:
    """SQLite run ledger in the test's temporary directory."""
    url = f"sqlite:///{tmp_path / 'ledger.db'}"
    logger.info("Enabling ledger at %s", url)
    database.configure(url)
    yield url
    database.configure()


# ------------------------------------------------------------------------------
# HTTP client
# ------------------------------------------------------------------------------
@pytest_asyncio.fixture(scope="function")
async def async_client() -> AsyncGenerator[httpx.AsyncClient, None]:
    """In-process client for the FastAPI app."""
    from tsr.service import app

    async with httpx.AsyncClient(
        transport=httpx.ASGITransport(app=app),
        base_url="http://testserver",
        timeout=httpx.Timeout(HTTP_TIMEOUT),
    ) as client:
        yield client
