"""Shared collector for the acceptance gate's verdict lines.

``test_acceptance`` appends one ``PASS``/``FAIL`` line per criterion as it
runs; the ``conftest`` terminal-summary hook prints whatever accumulated,
so the verdict block appears even when individual criteria fail.
"""

LINES: list[str] = []
