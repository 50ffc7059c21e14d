"""Shared pytest hooks.

The acceptance tests append one verdict line per criterion to
``acceptance_verdicts``; printing them from the terminal-summary hook keeps
them visible regardless of capture settings.
"""

acceptance_verdicts: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_verdicts:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_verdicts:
            terminalreporter.write_line(line)
