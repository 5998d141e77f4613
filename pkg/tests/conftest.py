"""Shared pytest hooks.

The acceptance tests append one verdict line per criterion to
`acceptance_lines`; printing them in the terminal summary keeps the
pass/fail record visible even though pytest captures ordinary stdout.
"""

acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
