"""Shared fixtures: pipeline shortcut and a small mixed synthetic corpus."""

import numpy as np
import pytest

from rstile.core import CsrMatrix, generate_power_law
from rstile.partition import PartitionParams, partition_rows, split_long_work
from rstile.tile import build_rstile


@pytest.fixture(scope="session")
def build_format():
    """partition -> split -> build with default or supplied params."""

    def _build(a: CsrMatrix, p: PartitionParams | None = None):
        p = p or PartitionParams()
        return build_rstile(a, split_long_work(a, partition_rows(a, p), p))

    return _build


@pytest.fixture(scope="session")
def small_corpus():
    """24 power-law matrices spanning sizes, skews, and densities."""
    sizes = [32, 48, 64, 96, 128, 192]
    skews = [1.2, 1.5, 2.0]
    densities = [0.01, 0.03, 0.08]
    mats = []
    i = 0
    for n in sizes:
        for delta in (0, 1):
            skew = skews[i % 3]
            density = densities[(i + delta) % 3]
            n_cols = n if delta == 0 else max(16, n // 2)
            target = max(1, int(round(density * n * n_cols)))
            mats.append(generate_power_law(n, n_cols, target, skew, seed=100 + i))
            i += 1
        for delta in (2, 3):
            skew = skews[(i + 1) % 3]
            density = densities[i % 3]
            n_cols = min(256, 2 * n) if delta == 2 else n
            target = max(1, int(round(density * n * n_cols)))
            mats.append(generate_power_law(n, n_cols, target, skew, seed=200 + i))
            i += 1
    return mats
