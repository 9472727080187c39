import pytest

from occupancy_lab import FrequencySpec, build_frequencies

FAMILY_SPECS = {
    "geometric": FrequencySpec.geometric(0.5),
    "power_law": FrequencySpec.power_law(2.0),
    "stretched_exp": FrequencySpec.stretched_exp(0.5),
    "poisson_weights": FrequencySpec.poisson_weights(5.0),
    "bgy_ex2": FrequencySpec.block_rule("bgy_ex2"),
    "karlin_ex1": FrequencySpec.block_rule("karlin_ex1"),
    "genex": FrequencySpec.block_rule("genex", beta=0.5, alpha=1.0),
    "factorial": FrequencySpec.block_rule("factorial"),
}

_cache = {}


def view_of(name):
    if name not in _cache:
        _cache[name] = build_frequencies(FAMILY_SPECS[name])
    return _cache[name]


@pytest.fixture(params=sorted(FAMILY_SPECS))
def family_view(request):
    return view_of(request.param)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
