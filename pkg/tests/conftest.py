import pytest

_ACCEPTANCE: list = []


@pytest.fixture
def acceptance(request):
    """Record a criterion's outcome and echo one line to the terminal."""
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def report(num: int, ok: bool, detail: str):
        line = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((num, line))
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE, key=lambda t: t[0]):
        terminalreporter.write_line(line)
