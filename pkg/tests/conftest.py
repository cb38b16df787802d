import sys


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical comparison")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts):
        terminalreporter.write_line(verdicts[number])
    missing = sorted(set(range(1, 13)) - set(verdicts))
    for number in missing:
        terminalreporter.write_line(f"criterion {number:2d} [FAIL] no verdict recorded (test errored)")
