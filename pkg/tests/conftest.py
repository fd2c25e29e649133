import random

import pytest

from streamfolio.bacp import BacpInstance


def random_small_instance(rng: random.Random, max_courses: int = 4, max_periods: int = 3) -> BacpInstance:
    C = rng.randint(1, max_courses)
    P = rng.randint(1, max_periods)
    loads = [rng.randint(1, 3) for _ in range(C)]
    pre = set()
    for a in range(1, C + 1):
        for b in range(a + 1, C + 1):
            if rng.random() < 0.2:
                pre.add((a, b) if rng.random() < 0.7 else (b, a))
    lb = rng.randint(0, 3)
    clb = rng.randint(0, 1)
    return BacpInstance(
        n_courses=C,
        n_periods=P,
        load_per_period_lb=lb,
        load_per_period_ub=lb + rng.randint(0, 4),
        courses_per_period_lb=clb,
        courses_per_period_ub=clb + rng.randint(0, 3),
        prerequisite=tuple(pre),
        course_load=tuple(loads),
    )


@pytest.fixture
def tiny():
    """C=2, P=2, unit loads, exact bounds, course 1 before course 2."""
    return BacpInstance(2, 2, 1, 1, 1, 1, ((1, 2),), (1, 1))


def pytest_configure(config):
    config._criteria = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criteria", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records and prints one result line."""

    def record(n: int, ok: bool | None, detail: str) -> None:
        state = {True: "PASS", False: "FAIL", None: "NOT RUN"}[ok]
        line = f"criterion {n}: {state} - {detail}"
        request.config._criteria.append(line)
        print(line)

    return record
