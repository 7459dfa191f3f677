import time

from hypothesis import settings

settings.register_profile("default", deadline=None, derandomize=True)
settings.load_profile("default")

SUITE_LIMIT_S = 300.0
_start = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    elapsed = time.perf_counter() - _start
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
    ok = "PASS" if elapsed < SUITE_LIMIT_S else "FAIL"
    terminalreporter.write_line(f"[{ok}] C8 suite runtime: {elapsed:.1f}s (< {SUITE_LIMIT_S:.0f}s)")
