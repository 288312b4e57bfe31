import numpy as np
import pytest

from vehicle_energy import ConfigurationError, ParseError, SimplifiedModel, load_bundled
from vehicle_energy.grid_dump import (
    GridModel,
    axes_from_overrides,
    export_grid,
    load_grid,
    tabulate,
)


@pytest.fixture(scope="module")
def sedan():
    return SimplifiedModel(load_bundled("compact_sedan"))


SMALL = {"v": (0.0, 35.0, 36), "a": (-3.0, 3.0, 25), "theta": (-0.03, 0.03, 7)}


@pytest.mark.parametrize("suffix", [".npz", ".csv"])
def test_round_trip_is_exact_at_nodes(tmp_path, sedan, suffix):
    written = export_grid(sedan, tmp_path / f"g{suffix}", SMALL)
    loaded = load_grid(tmp_path / f"g{suffix}")
    for a, b in zip(written.axes, loaded.axes):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(written.fuel, loaded.fuel)
    np.testing.assert_array_equal(written.feasible, loaded.feasible)
    V, A, TH = np.meshgrid(*loaded.axes, indexing="ij")
    fuel, feasible = loaded(V, A, TH)
    np.testing.assert_allclose(fuel, loaded.fuel, rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(feasible, loaded.feasible)


def test_default_grid_interpolation_error_is_small(sedan):
    grid_fuel, grid_ok = tabulate(sedan, axes_from_overrides())
    model = GridModel(axes_from_overrides(), grid_fuel, grid_ok)
    rng = np.random.default_rng(0)
    v, a, th = rng.uniform(5, 34, 2000), rng.uniform(-0.5, 1.5, 2000), rng.uniform(-.03, .03, 2000)
    truth = sedan(v, a, th)[0]
    approx = model(v, a, th)[0]
    keep = truth > 0.2
    assert np.median(np.abs(approx[keep] / truth[keep] - 1)) < 0.005


def test_queries_outside_are_clamped_and_counted(sedan, tmp_path):
    model = export_grid(sedan, tmp_path / "g.npz", SMALL)
    inside = model(35.0, 3.0, 0.03)[0]
    assert model(40.0, 3.5, 0.03)[0] == pytest.approx(inside)
    assert model.diagnostics.value == 1  # one query point, outside on two axes
    model(np.array([-1.0, 10.0, 50.0]), 0.0, 0.0)
    assert model.diagnostics.value == 3


def test_axis_validation():
    with pytest.raises(ConfigurationError):
        axes_from_overrides({"v": (1.0, 0.0, 5)})
    with pytest.raises(ConfigurationError):
        axes_from_overrides({"a": (0.0, 1.0, 1)})


def test_missing_dump(tmp_path):
    with pytest.raises(ConfigurationError):
        load_grid(tmp_path / "none.npz")


def test_truncated_csv(tmp_path, sedan):
    path = tmp_path / "g.csv"
    export_grid(sedan, path, SMALL)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-5]) + "\n")
    with pytest.raises(ParseError, match="data rows"):
        load_grid(path)


def test_bad_header(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("# axis,v,0,1,2\n# axis,a,0,1,2\n# axis,theta,0,1,2\nv,a,fuel\n")
    with pytest.raises(ParseError) as err:
        load_grid(path)
    assert err.value.row == 0
