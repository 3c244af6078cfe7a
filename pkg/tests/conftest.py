import pytest

from tests.helpers import load_finding_set, load_fsm, load_tree


@pytest.fixture(scope="session")
def minimal_fsm():
    return load_fsm("minimal")


@pytest.fixture(scope="session")
def vulnweb_fsm():
    return load_fsm("vulnweb")


@pytest.fixture(scope="session")
def teacher_fsm():
    return load_fsm("teacher")


@pytest.fixture(scope="session")
def vulnweb_findings():
    return load_finding_set("vulnweb")


@pytest.fixture(scope="session")
def vulnweb_tree():
    return load_tree("vulnweb")
