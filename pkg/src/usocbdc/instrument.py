"""Access counters on stateful services.  Offline verification must leave
these at zero."""

from collections import Counter

ACCESS: Counter = Counter()


def touch(service: str) -> None:
    ACCESS[service] += 1


def reset() -> None:
    ACCESS.clear()


def total() -> int:
    return sum(ACCESS.values())
