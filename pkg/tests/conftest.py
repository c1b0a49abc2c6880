# (criterion, part) -> (passed, detail); filled by the acceptance tests
ACCEPTANCE: dict[tuple[int, str], tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (n, part) in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[(n, part)]
        label = f"criterion {n:2d}" + (f" [{part}]" if part else "")
        terminalreporter.write_line(f"{label}: {'PASS' if ok else 'FAIL'}  {detail}")
