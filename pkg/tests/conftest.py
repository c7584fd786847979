import sys


def pytest_terminal_summary(terminalreporter):
    # repeat the acceptance lines at the end of the run, outside captured output
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
