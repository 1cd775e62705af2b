import numpy as np
import pytest

_CRITERIA: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    key = f"{mark.args[0]}"
    title = mark.args[1]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        prev = _CRITERIA.get(key, (title, "PASS"))[1]
        status = "PASS" if rep.outcome == "passed" and prev == "PASS" else "FAIL"
        _CRITERIA[key] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: [int(p) if p.isdigit() else p for p in k.split(".")]):
        title, status = _CRITERIA[key]
        terminalreporter.write_line(f"criterion {key:>4}: {status}  {title}")


def random_density(rng, dim, rank=None):
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_povm(rng, dim, n):
    blocks = []
    for _ in range(n):
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        blocks.append(g @ g.conj().T)
    w, v = np.linalg.eigh(sum(blocks))
    inv_root = (v / np.sqrt(w)) @ v.conj().T
    return [0.5 * (x + x.conj().T) for x in (inv_root @ b @ inv_root for b in blocks)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
