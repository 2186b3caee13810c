import numpy as np
import pytest

from balancebounds.dgp import example2_csv, example2_dataset
from balancebounds.sample import EmpiricalCond, Sample, Unit


@pytest.fixture(scope="session")
def ex2():
    """(sample, curated subsample handle, finite population) of the bundled
    24-unit dataset."""
    return example2_dataset()


@pytest.fixture()
def ex2_csv_path(tmp_path):
    path = tmp_path / "ex2.csv"
    path.write_text(example2_csv())
    return path


def make_sample(x1, x0, y_fn=None, prefix=("t", "c")) -> Sample:
    """Scalar-control sample from treated/control value lists."""
    y_fn = y_fn or (lambda x, d: x)
    units = []
    for i, v in enumerate(x1):
        units.append(Unit(id=f"{prefix[0]}{i}", y=y_fn(v, 1), x=(float(v),), d=1))
    for i, v in enumerate(x0):
        units.append(Unit(id=f"{prefix[1]}{i}", y=y_fn(v, 0), x=(float(v),), d=0))
    return Sample(tuple(units), p=1)


def random_arm(rng, arm, n_points, pool=None):
    locs = rng.choice(pool, size=n_points, replace=False) if pool is not None else rng.normal(size=n_points)
    w = rng.dirichlet(np.ones(n_points))
    return EmpiricalCond.from_pairs(arm, zip((float(v) for v in locs), w))
