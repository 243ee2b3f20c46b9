import numpy as np
import pandas as pd
import pytest

from fairmap import data

# criterion number -> (title, passed, detail), filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def record_criterion():
    def record(number, title, passed, detail=""):
        ACCEPTANCE[number] = (title, bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {title} {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}  {detail}".rstrip())


@pytest.fixture(scope="session")
def lipton():
    return data.generate_lipton(400, seed=3)


@pytest.fixture
def mixed_dataset():
    """Six rows with a numeric, a categorical and a categorical decision column."""
    frame = pd.DataFrame({
        "sex": ["f", "m", "f", "m", "f", "m"],
        "age": [20.0, 35.0, 50.0, 41.0, 29.0, 60.0],
        "job": ["a", "b", "c", "a", "b", "c"],
        "income": ["low", "high", "low", "high", "high", "high"],
    })
    schema = [
        data.AttributeSpec("sex", "categorical", "sensitive"),
        data.AttributeSpec("age"),
        data.AttributeSpec("job", "categorical"),
        data.AttributeSpec("income", "categorical", "decision", ("low", "high")),
    ]
    return data.from_frame(frame, schema)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
