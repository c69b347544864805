from __future__ import annotations

import pytest

from helpers import Parties, fast_ledger


@pytest.fixture
def ledger():
    led = fast_ledger()
    yield led
    led.close()


@pytest.fixture
def parties(ledger):
    return Parties(ledger)


@pytest.fixture
def world(parties):
    """Parties with DIDs registered and one approved work, ``clip-1``."""
    parties.approved_media()
    return parties


@pytest.fixture
def gateway(tmp_path):
    from helpers import start_gateway

    running = start_gateway(tmp_path)
    yield running
    running.stop()


@pytest.fixture
def client(gateway):
    from mdmchain.client import GatewayClient

    with GatewayClient(gateway.url, timeout=30) as c:
        yield c


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
