"""Shared fixtures, pytest markers, and env-var-based skip logic."""

from __future__ import annotations

import os

import pytest

from normality.core import Alphabet


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line(
        "markers", "slow: desk-scale runs over 10^6..10^7 symbols (FSNORMAL_TEST_SLOW=1)"
    )


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    # slow is opt-in; set FSNORMAL_TEST_SLOW=1 to enable
    for item in items:
        if "slow" in item.keywords and not os.environ.get("FSNORMAL_TEST_SLOW"):
            item.add_marker(
                pytest.mark.skip(reason="Set FSNORMAL_TEST_SLOW=1 to run")
            )


@pytest.fixture
def binary() -> Alphabet:
    return Alphabet.of_size(2)


@pytest.fixture
def ternary() -> Alphabet:
    return Alphabet(("a", "b", "c"))
