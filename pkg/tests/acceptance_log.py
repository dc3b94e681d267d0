"""Collects acceptance lines so the pytest terminal summary can repeat them."""

from __future__ import annotations

LINES: list[str] = []


def record(line: str) -> None:
    LINES.append(line)
