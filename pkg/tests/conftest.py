import contextlib
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: list[tuple[int, str, bool, str]] = []


class _Outcome:
    def __init__(self):
        self.detail = ""


@pytest.fixture
def criterion():
    """Context manager recording one acceptance criterion as PASS or FAIL."""

    @contextlib.contextmanager
    def record(number: int, title: str):
        out = _Outcome()
        ok = False
        try:
            yield out
            ok = True
        except BaseException as exc:
            out.detail = out.detail or f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
            raise
        finally:
            line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{out.detail}]" if out.detail else "")
            _RESULTS.append((number, title, ok, line))
            print(line, file=sys.__stdout__, flush=True)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, _, line in sorted(_RESULTS):
        terminalreporter.write_line(line)
