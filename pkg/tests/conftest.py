import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(results, key=int):
        passed, detail = results[cid]
        terminalreporter.write_line(f"criterion {cid}: {'PASS' if passed else 'FAIL'} - {detail}")
