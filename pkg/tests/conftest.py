import pytest

_CRITERIA = []


class Criterion:
    """Collects the pass/fail line for one acceptance criterion."""

    def __init__(self, name):
        self.name = name
        self.line = None

    def report(self, ok, detail=""):
        self.line = f"criterion {self.name:<10} {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _CRITERIA.append(self.line)
        print(self.line)
        assert ok, self.line


@pytest.fixture
def criterion(request):
    rec = Criterion(request.node.callspec.id if hasattr(request.node, "callspec") else
                    request.node.name.removeprefix("test_criterion_").replace("_", "-"))
    yield rec
    if rec.line is None:
        _CRITERIA.append(f"criterion {rec.name:<10} FAIL  (raised before reporting)")


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
