import numpy as np
import pytest

from priorseg.nifti_io import LabelMap

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_acceptance(name: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((name, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


def mask(data, spacing=(1.0, 1.0, 1.0)) -> LabelMap:
    return LabelMap.from_array(np.asarray(data).astype(np.uint8), spacing)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SMALL_SPEC = dict(dims=(48, 48, 64), spacing=(6.0, 6.0, 8.0), n_female=2, n_male=2)


@pytest.fixture(scope="session")
def small_cohort(tmp_path_factory):
    """A 2F/2M phantom cohort on a coarse grid; returns the manifest path."""
    from priorseg.phantom import PhantomSpec, generate_cohort

    out = tmp_path_factory.mktemp("cohort")
    generate_cohort(PhantomSpec(**SMALL_SPEC), out)
    return out / "manifest.json"
