from pathlib import Path

import pytest

from dlst.dataset import load_arff

DATA = Path(__file__).resolve().parents[1] / "data" / "emotions"


@pytest.fixture(scope="session")
def emotions():
    return load_arff(DATA / "emotions.arff", DATA / "emotions.xml")


@pytest.fixture
def toy_arff(tmp_path):
    arff = tmp_path / "toy.arff"
    arff.write_text(
        "@relation toy\n"
        "@attribute f1 numeric\n"
        "@attribute f2 numeric\n"
        "@attribute a {0,1}\n"
        "@attribute b {0,1}\n"
        "@data\n"
        "0.5,1.0,1,0\n"
        "1.5,-2.0,0,1\n"
        "3.0,0.25,1,1\n"
    )
    xml = tmp_path / "toy.xml"
    xml.write_text(
        '<?xml version="1.0" encoding="utf-8"?>\n'
        '<labels xmlns="http://mulan.sourceforge.net/labels">\n'
        '<label name="a"></label>\n<label name="b"></label>\n</labels>\n'
    )
    return arff, xml


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
