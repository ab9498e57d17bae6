"""Acceptance bookkeeping: one PASS/FAIL line per criterion in the terminal summary."""

import functools
import time

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def criterion(name):
    """Record the outcome of an acceptance test under ``name``.

    The wrapped test may return a short detail string to show next to the verdict.
    """
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
                ACCEPTANCE_RESULTS.append((name, False, msg[:160]))
                raise
            elapsed = time.perf_counter() - t0
            ACCEPTANCE_RESULTS.append((name, True, f"{detail or 'ok'} ({elapsed:.1f}s)"))
        return run
    return wrap


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
