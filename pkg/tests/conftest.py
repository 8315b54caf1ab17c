import pytest

from bubblestab import modal_control, steklov
from bubblestab.config import BubbleConfig


@pytest.fixture(scope="session")
def cfg():
    return BubbleConfig()


@pytest.fixture(scope="session")
def P(cfg):
    return steklov.assemble(cfg, "analytic")


@pytest.fixture(scope="session")
def spectrum(P, cfg):
    return modal_control.mode_spectrum(P, cfg)


@pytest.fixture(scope="session")
def target_rate(spectrum):
    """Twice the slowest nonzero open-loop decay rate."""
    return 2.0 * modal_control.slowest_nonzero_rate(spectrum)


@pytest.fixture(scope="session")
def law(P, spectrum, cfg, target_rate):
    return modal_control.build_feedback(P, spectrum, target_rate, cfg)


@pytest.fixture(scope="session")
def small_cfg():
    return BubbleConfig(K=16)


@pytest.fixture(scope="session")
def small_P(small_cfg):
    return steklov.assemble(small_cfg, "analytic")


@pytest.fixture(scope="session")
def small_law(small_P, small_cfg):
    spec = modal_control.mode_spectrum(small_P, small_cfg)
    lam = 2.0 * modal_control.slowest_nonzero_rate(spec)
    return modal_control.build_feedback(small_P, spec, lam, small_cfg)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture(scope="session")
def verdict(request):
    """Record and print one PASS/FAIL line, then assert on it."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
