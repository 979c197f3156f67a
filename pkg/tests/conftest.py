"""Shared test fixtures and random data helpers."""

from __future__ import annotations

import numpy as np
import pytest

from recwin.core_data import Arm, Dataset, SubjectHistory


def random_history(rng: np.random.Generator, ident: str, arm: Arm) -> SubjectHistory:
    """A random but valid subject history covering the interesting corners:
    death vs censoring, zero to several recurrences, boundary times."""
    censor = float(rng.uniform(0.5, 5.0))
    died = rng.random() < 0.4
    death = float(rng.uniform(0.2, censor)) if died else None
    follow = death if died else censor
    k = int(rng.integers(0, 5))
    times = np.sort(rng.uniform(0.05, follow, size=k))
    times = tuple(float(t) for t in np.unique(times))
    if rng.random() < 0.15 and times:
        # exercise the "recurrence exactly at follow-up" boundary
        times = times[:-1] + (follow,)
    return SubjectHistory(
        id=ident,
        arm=arm,
        recurrent_times=times,
        censor_time=censor,
        death_time=death,
        covariates={"z2": float(rng.integers(0, 2))},
    )


def random_dataset(rng: np.random.Generator, n_exp: int, n_ctl: int) -> Dataset:
    subs = [random_history(rng, f"e{i}", Arm.EXPERIMENTAL) for i in range(n_exp)]
    subs += [random_history(rng, f"c{i}", Arm.CONTROL) for i in range(n_ctl)]
    return Dataset(tuple(subs))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
