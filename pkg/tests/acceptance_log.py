"""Shared record of acceptance verdicts, printed once at the end of the run."""

LINES: list[str] = []


def record(num: int, ok: bool, detail: str) -> None:
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'} {detail}"
    LINES.append(line)
    print(line)
