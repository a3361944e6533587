"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES = []


def record(number, passed, summary):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {summary}"
    LINES.append(line)
    print(line)
    return passed
