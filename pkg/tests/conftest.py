import numpy as np
import pytest
from hypothesis import settings

from sclipnet.noise import NoiseModel, build_truncated_sampler
from sclipnet.problem import from_matrices, generate
from sclipnet.rng import problem_stream
from sclipnet.topology import build_cycle_with_degree, metropolis_weights

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def heavy():
    """Truncated heavy-tailed law on [-100, 100] with its sampler table."""
    return build_truncated_sampler(NoiseModel("example"))


@pytest.fixture(scope="session")
def heavy_full():
    return NoiseModel("example", truncation=None)


@pytest.fixture(scope="session")
def zero_noise():
    return build_truncated_sampler(NoiseModel("zero"))


@pytest.fixture(scope="session")
def ref_problem():
    return generate(20, 10, problem_stream(0))


@pytest.fixture(scope="session")
def small_problem():
    return generate(6, 3, problem_stream(11))


@pytest.fixture(scope="session")
def cycle20():
    return metropolis_weights(build_cycle_with_degree(20, 4))


@pytest.fixture(scope="session")
def cycle6():
    return metropolis_weights(build_cycle_with_degree(6, 2))


@pytest.fixture
def scalar_problem():
    # f(x) = x^2 - 4x, minimizer 2
    return from_matrices(np.array([[[2.0]]]), np.array([[-4.0]]))


# ---------------------------------------------------------------- acceptance report

_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture(scope="session")
def criterion():
    """``criterion(k, ok, detail)`` records one clause of acceptance criterion k."""

    def record(k: int, ok: bool, detail: str) -> None:
        _CRITERIA.setdefault(k, []).append((bool(ok), detail))
        print(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        clauses = _CRITERIA[k]
        ok = all(c for c, _ in clauses)
        detail = "; ".join(d for _, d in clauses)
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
