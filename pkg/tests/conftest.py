import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion in sorted(results):
        entries = results[criterion]
        verdict = "PASS" if all(ok for ok, _ in entries) else "FAIL"
        tr.write_line(f"criterion {criterion:>2}: {verdict}")
        for ok, detail in entries:
            tr.write_line(f"    [{'ok' if ok else 'FAIL'}] {detail}")
