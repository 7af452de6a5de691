import warnings

import pytest

_ACCEPTANCE = {}


class AcceptanceLog:
    """Collects one pass/fail line per acceptance criterion."""

    def record(self, number: int, title: str, ok: bool, detail: str = "") -> None:
        _ACCEPTANCE[number] = (title, bool(ok), detail)
        print(f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


@pytest.fixture(autouse=True)
def _quiet_numpy():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", category=RuntimeWarning, message=".*(overflow|invalid value|divide by zero).*")
        yield


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
    n_ok = sum(ok for _, ok, _ in _ACCEPTANCE.values())
    terminalreporter.write_line(f"{n_ok}/{len(_ACCEPTANCE)} acceptance criteria passed")
