from collections import defaultdict

import pytest

CRITERIA = {
    1: "portal graphs are trees; 2*dist = dist_x + dist_y + dist_z",
    2: "PASC exactness and iteration bound",
    3: "tree primitives equal brute-force oracles",
    4: "SPT correctness and round scaling",
    5: "SPF correctness against the BFS oracle",
    6: "SPF round envelope and bit-identical replay",
    7: "engine beep semantics and round ordering",
    8: "memory audit",
}

_outcomes: dict = defaultdict(list)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    rep = (yield).get_result()
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        for mark in item.iter_markers("criterion"):
            _outcomes[mark.args[0]].append(rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        got = _outcomes.get(n)
        if not got:
            continue
        verdict = "PASS" if all(o == "passed" for o in got) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}  {title} ({len(got)} checks)")
