import _acceptance_log


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance_log.RESULTS):
        passed, detail = _acceptance_log.RESULTS[number]
        terminalreporter.write_line(
            f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")
