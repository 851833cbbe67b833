acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance summary:")
        for line in acceptance_lines:
            terminalreporter.write_line("  " + line)
