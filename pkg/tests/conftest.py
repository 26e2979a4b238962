from __future__ import annotations

import pytest

from coopkitchen.tasks import TaskSpec, catalog, find_task


@pytest.fixture(scope="session")
def all_tasks() -> list[TaskSpec]:
    return catalog()


@pytest.fixture(scope="session")
def pumpkin_soup() -> TaskSpec:
    return find_task("baked_pumpkin_soup")


@pytest.fixture(scope="session")
def bell_pepper() -> TaskSpec:
    return find_task("baked_bell_pepper")
