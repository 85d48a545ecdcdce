import _acceptance


def pytest_terminal_summary(terminalreporter):
    if not any(_acceptance.RESULTS.values()):
        return
    terminalreporter.section("acceptance criteria")
    for line in _acceptance.summary_lines():
        terminalreporter.write_line(line)
