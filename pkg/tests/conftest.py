"""Shared fixtures and straight-line reference implementations for the tests."""

import json
import math
from importlib import resources

import pytest

VEHICLE_KEYS = ("compact_sedan", "midsize_sedan", "midsize_suv", "midsize_pickup",
                "class4_pnd", "class8_tractor")
LIGHT_KEYS = VEHICLE_KEYS[:4]
HEAVY_KEYS = VEHICLE_KEYS[4:]


def bundled_table(key):
    """Raw coefficient dictionary of a bundled vehicle, read without the package's loader."""
    text = (resources.files("vehicle_energy") / "data" / "vehicles" / f"{key}.json").read_text()
    return json.loads(text)


def hand_fuel_rate(p, v, a, theta):
    """Scalar substitution into the simplified fuel formula, one term at a time.

    Written independently of the package: plain floats, no numpy.
    """
    if v < 0:
        return 0.0
    C = p["c0"] + p["c1"] * v + p["c2"] * v * v + p["c3"] * v * v * v
    P = p["p0"] + p["p1"] * v + p["p2"] * v * v
    Q = p["q0"] + p["q1"] * v
    Z = p["z0"] + p["z1"] * v + p["z2"] * v * v
    if Q > 0:
        vertex = -P / (2 * Q)
    elif P == 0:
        vertex = 0.0
    else:
        vertex = -math.inf
    a_plus = max(a, vertex)
    poly = C + P * a_plus + (Q * a_plus * a_plus if Q > 0 else 0.0) + Z * theta
    if p["duty"] == "LightDuty":
        if v <= p["v_c"]:
            floor = p["beta"]
        else:
            a_c = (p["a0"] + p["a1"] * v + p["a2"] * theta + p["a3"] * v * v
                   + p["a4"] * v * theta)
            if a < a_c:
                return 0.0
            floor = 0.0
    else:
        floor = p["h0"] + p["h1"] * v
    return max(0.0, max(floor, poly))


def hand_a_max(p, v, theta):
    speed_limit = p["b1"] if v <= 0 else min(p["b1"], p["b2"] / v - p["b3"] * v * v)
    return speed_limit - min(p["b4"], p["b5"] + p["b6"] * v) * theta


@pytest.fixture(params=VEHICLE_KEYS)
def vehicle_key(request):
    return request.param


# -- acceptance summary -----------------------------------------------------------------

ACCEPTANCE_RESULTS = []  # (criterion, passed, detail), appended by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    by_criterion = {}
    for number, passed, detail in ACCEPTANCE_RESULTS:
        by_criterion.setdefault(number, []).append((passed, detail))
    for number in sorted(by_criterion):
        parts = by_criterion[number]
        verdict = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        details = "; ".join(d for ok, d in parts if not ok) or "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number}: {verdict} ({details})")
