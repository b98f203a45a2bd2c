import pytest

# criterion number -> {"title", "outcome", "notes"}
_CRITERIA = {}


class Criterion:
    def __init__(self, number, title, informational=False):
        self.entry = _CRITERIA.setdefault(
            number, {"title": title, "outcome": None, "notes": [],
                     "informational": informational})

    def note(self, text):
        self.entry["notes"].append(text)

    def status(self, text):
        """Label shown instead of PASS for informational criteria."""
        self.entry["status"] = text


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("acceptance")
    number, title = marker.args
    return Criterion(number, title, marker.kwargs.get("informational", False))


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.failed or report.skipped):
        return
    marker = next((m for m in getattr(report, "_markers", ()) if m.name == "acceptance"), None)
    if marker is None:
        return
    entry = _CRITERIA.setdefault(marker.args[0], {"title": marker.args[1], "outcome": None,
                                                  "notes": [], "informational": False})
    if report.failed:
        entry["outcome"] = "FAIL"
    elif report.skipped:
        entry["outcome"] = entry["outcome"] or "SKIP"
    elif entry["outcome"] is None:
        entry["outcome"] = "PASS"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    outcome.get_result()._markers = list(item.iter_markers("acceptance"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        outcome = entry["outcome"] or "NOT RUN"
        if outcome == "PASS" and entry.get("status"):
            outcome = entry["status"]
        tag = " (informational)" if entry["informational"] else ""
        tr.write_line(f"criterion {number}: {outcome}{tag}  {entry['title']}")
        for note in entry["notes"]:
            tr.write_line(f"    {note}")
