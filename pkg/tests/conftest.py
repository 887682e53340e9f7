import pytest

# criterion -> list of (part, passed, detail); filled by the acceptance suite
ACCEPTANCE: dict = {}


class Recorder:
    def __init__(self, store):
        self.store = store

    def __call__(self, criterion: int, part: str, passed: bool, detail: str = "") -> bool:
        self.store.setdefault(criterion, []).append((part, bool(passed), detail))
        print(f"criterion {criterion} [{part}] {'PASS' if passed else 'FAIL'} {detail}")
        return bool(passed)


@pytest.fixture(scope="session")
def record():
    return Recorder(ACCEPTANCE)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[crit]
        ok = all(p for _, p, _ in parts)
        failed = [name for name, p, _ in parts if not p]
        suffix = f" (failing: {', '.join(failed)})" if failed else ""
        tr.write_line(f"{'PASS' if ok else 'FAIL'} criterion {crit}: {len(parts)} part(s){suffix}")
    for crit in sorted(ACCEPTANCE):
        for name, p, detail in ACCEPTANCE[crit]:
            tr.write_line(f"  {crit}.{name}: {'PASS' if p else 'FAIL'} {detail}")
