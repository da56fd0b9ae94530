import pytest

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record an acceptance sub-check: ``criterion(n, ok, detail)`` returns ``ok``."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, ok, detail):
        store.setdefault(number, []).append((bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(store):
        checks = store[number]
        verdict = "PASS" if all(ok for ok, _ in checks) else "FAIL"
        details = "; ".join(("" if ok else "[failed] ") + d for ok, d in checks)
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {details}")
