import pytest

from agentfm import simulator
from agentfm.roles import bootstrap_roles
from agentfm.telemetry import Window


@pytest.fixture(scope="session")
def spec():
    return simulator.default_cluster(6, seed=42)


@pytest.fixture(scope="session")
def table(spec):
    return bootstrap_roles(spec.to_config())


@pytest.fixture(scope="session")
def window():
    return Window(0, 60)


@pytest.fixture(scope="session")
def baseline(spec, window):
    return simulator.generate_baseline(spec, window, index=0)


@pytest.fixture(scope="session")
def small_campaign(spec):
    return list(simulator.iter_campaign(spec, per_type=2, normals=4))


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory, spec):
    out = tmp_path_factory.mktemp("campaign") / "data"
    simulator.generate_campaign(spec, 1, 3, out)
    return out


# -- acceptance summary ------------------------------------------------------------

def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m:
            item.user_properties.append(("criterion", m.args))


def pytest_terminal_summary(terminalreporter):
    items = [i for i in terminalreporter.stats.get("passed", []) + terminalreporter.stats.get("failed", []) + terminalreporter.stats.get("error", []) if "criterion" in i.keywords]
    if not items:
        return
    rows = {}
    for rep in items:
        args = dict(rep.user_properties).get("criterion")
        if args is None:
            continue
        num, title = args
        ok = rep.outcome == "passed"
        prev = rows.get(num, (True, title))
        rows[num] = (prev[0] and ok, title)
    terminalreporter.section("acceptance criteria")
    for num in sorted(rows):
        ok, title = rows[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {title}")
