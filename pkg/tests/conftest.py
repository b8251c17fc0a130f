from __future__ import annotations

import pytest

from mmstream.datagen import StreamEvent, TollBoothConfig, VolleyballConfig, gen_tollbooth, gen_volleyball
from mmstream.models import ModelCatalog, default_catalog


@pytest.fixture(scope="session")
def catalog() -> ModelCatalog:
    return default_catalog()


@pytest.fixture(scope="session")
def toll_stream():
    return gen_tollbooth(TollBoothConfig(seed=0, duration_frames=900))


@pytest.fixture(scope="session")
def toll_events(toll_stream) -> list[StreamEvent]:
    return list(toll_stream)


@pytest.fixture(scope="session")
def volley_stream():
    return gen_volleyball(VolleyballConfig(seed=0, duration_frames=600))


@pytest.fixture(scope="session")
def volley_events(volley_stream) -> list[StreamEvent]:
    return list(volley_stream)


# one PASS/FAIL line per acceptance check, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log() -> list[str]:
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter) -> None:
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance checks")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
