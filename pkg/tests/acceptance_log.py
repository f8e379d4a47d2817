"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

RESULTS = {}


def record(key: str, ok: bool, detail: str) -> None:
    line = f"{key} {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS[key] = line
    print(line)
