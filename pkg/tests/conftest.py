import itertools
import os
from pathlib import Path

import numpy as np
import pytest

from factforge.cleaning import clean
from factforge.construction import construct
from factforge.encoding import one_hot
from factforge.imputation import CascadeImputer
from factforge.naming import ColumnName
from factforge.parsing import ParseAudit, build_table_v1, ingest_directory
from factforge.table import MISSING, Table, label, number, text

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS_DIR = FIXTURES / "factbook"
GOLDEN_DIR = FIXTURES / "golden"

# Path to an archived real snapshot download; reproduction tests only run
# when it is provided.
REAL_SNAPSHOT_ENV = "FACTBOOK_2019_DIR"


def real_snapshot_dir():
    return os.environ.get(REAL_SNAPSHOT_ENV)


requires_real_snapshot = pytest.mark.skipif(
    real_snapshot_dir() is None,
    reason=f"set {REAL_SNAPSHOT_ENV} to an archived download to run",
)


@pytest.fixture(scope="session")
def corpus_dir():
    return CORPUS_DIR


@pytest.fixture(scope="session")
def golden_dir():
    return GOLDEN_DIR


@pytest.fixture(scope="session")
def parse_audit():
    return ParseAudit()


@pytest.fixture(scope="session")
def v1_table(parse_audit):
    documents = ingest_directory(CORPUS_DIR, parse_audit)
    return build_table_v1(documents, parse_audit)


@pytest.fixture(scope="session")
def v2_result(v1_table):
    return clean(v1_table)


@pytest.fixture(scope="session")
def v2_table(v2_result):
    return v2_result[0]


@pytest.fixture(scope="session")
def v3_result(v2_table):
    return construct(v2_table)


@pytest.fixture(scope="session")
def v3_table(v3_result):
    return v3_result[0]


@pytest.fixture(scope="session")
def v4_result(v3_table):
    return one_hot(v3_table)


@pytest.fixture(scope="session")
def v4_table(v4_result):
    return v4_result[0]


def make_synthetic_v4(seed=11, n=200, missing_frac=0.2, targets=None):
    """Synthetic v4-style table with known ground truth.

    Five complete feature columns on [10, 50]; configurable targets given
    as name -> value vector; ``missing_frac`` of each target is held back
    (truth returned per row code).
    """
    rng = np.random.default_rng(seed)
    codes = ["".join(p) for p in itertools.product("abcdefghijklmnop", repeat=2)][:n]
    features = {f"f{i}": rng.uniform(10, 50, n) for i in range(1, 6)}

    def noisy(signal):
        return signal + rng.normal(0, 0.01 * signal.std(), n)

    if targets is None:
        targets = {
            "lin1": noisy(3 * features["f1"] + 100),
            "lin2": noisy(5 * features["f2"] - 5 * features["f3"] + 250),
            "step": noisy(np.where(features["f1"] > 30, 500.0, 100.0)),
            "rand": rng.uniform(10, 500, n),
        }

    columns = [
        (ColumnName("txt", "Country Name", reserved=True), [text(c) for c in codes]),
        (ColumnName("lbl", "Region", reserved=True), [label("x") for _ in codes]),
    ]
    for name, values in features.items():
        columns.append(
            (ColumnName("num", f"features-{name}"), [number(v) for v in values])
        )
    truth = {}
    for name, values in targets.items():
        hidden = set(
            int(i) for i in rng.choice(n, int(missing_frac * n), replace=False)
        )
        cells = [
            MISSING if i in hidden else number(v) for i, v in enumerate(values)
        ]
        columns.append((ColumnName("num", f"targets-{name}"), cells))
        truth[f"num targets-{name}"] = {
            codes[i]: float(values[i]) for i in sorted(hidden)
        }
    return Table(codes, columns, version="v4"), truth


@pytest.fixture(scope="session")
def synthetic_case():
    return make_synthetic_v4()


@pytest.fixture(scope="session")
def cascade_fitted(synthetic_case):
    table, _ = synthetic_case
    imputer = CascadeImputer(seed=42)
    imputer.fit(table)
    return imputer
