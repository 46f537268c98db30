import json
from pathlib import Path

import pytest

from partypes.bindings import BindingsFile
from partypes.parser import parse_program, parse_program_file, parse_protocol, parse_protocol_file

CORPUS = Path(__file__).resolve().parents[1] / "src" / "partypes" / "corpus"
SCHEMAS = Path(__file__).resolve().parents[1] / "src" / "partypes" / "schemas"


def corpus(name):
    return str(CORPUS / name)


def proto(name):
    return parse_protocol_file(corpus(name))


def prog(name):
    return parse_program_file(corpus(name))


def bindings(name):
    return BindingsFile.load(corpus(name))


def schema(name):
    return json.loads((SCHEMAS / f"{name}.schema.json").read_text())


def wrap(items, header="true", name="P"):
    """A protocol whose body is ``items``."""
    return parse_protocol(f"protocol {name} ({header}) {{\n{items}\n}}")


def program(text):
    return parse_program(text)


@pytest.fixture(scope="session")
def fdiff():
    return proto("fdiff.pt")


@pytest.fixture(scope="session")
def fdiff_prog():
    return prog("fdiff.mpp")


@pytest.fixture(scope="session")
def naive_prog():
    return prog("fdiff_naive.mpp")


@pytest.fixture(scope="session")
def fdiff_bindings():
    return bindings("fdiff.bindings.json")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
