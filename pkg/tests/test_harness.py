import json
import math

import pytest

from isoradial.config import get_settings
from isoradial.errors import ParameterError
from isoradial.harness import (
    ExperimentSpec,
    arm_lattice,
    compare_reports,
    exp_arm_decay,
    exp_crossing_universality,
    exp_iic_ratio,
    exp_measure_preservation,
    exp_rsw_probe,
    iic_lattice,
    list_reports,
    run_experiment,
    square_region,
)


def _small_preservation(seed=3, **kwargs):
    return exp_measure_preservation(samples=2, seed=seed, q_values=(1.0, 2.0, 4.0), torus_q=(2.0,), torus_width=2, **kwargs)


def test_spec_validation(tmp_path):
    with pytest.raises(ParameterError):
        ExperimentSpec(name="no-such-experiment")
    with pytest.raises(ParameterError):
        ExperimentSpec(name="rsw-probe", budget=0)
    with pytest.raises(ParameterError):
        ExperimentSpec.from_dict({"name": "rsw-probe", "sweeps": 3})
    assert ExperimentSpec(name="rsw-probe").seed == get_settings().seed

    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"name": "rsw-probe", "budget": 5, "model": {"q": 2.0}}))
    spec = ExperimentSpec.from_json(path, name="arm-decay")
    assert spec.name == "arm-decay"
    assert spec.kwargs() == {"q": 2.0, "samples": 5, "seed": get_settings().seed}


def test_measure_preservation_passes():
    report = _small_preservation()
    summary = report.summary
    assert report.passed
    assert summary["star_triangle_max_tv"] < 1e-12
    assert summary["exchange_max_tv"] < 1e-10
    assert summary["negative_control_min_tv"] > 1e-3
    checks = {row["check"] for row in report.rows}
    assert checks == {"star-triangle", "negative-control", "torus-exchange", "box-exchange"}
    assert len(report.rows) == 3 * 2 * 3 + 2


def test_saved_reports(tmp_path):
    first = _small_preservation(seed=3)
    second = _small_preservation(seed=4)
    json_path, csv_path = first.save(tmp_path)
    assert json_path.name.startswith("measure-preservation_")
    assert csv_path.with_suffix(".json") == json_path
    other, _ = second.save(tmp_path)

    listed = list_reports(tmp_path)
    assert len(listed) == 2
    assert {r["seed"] for r in listed} == {3, 4}
    assert all(r["experiment"] == "measure-preservation" and r["pass"] for r in listed)

    changes = compare_reports(json_path, other)
    assert "  Δ metadata.seed: 3 → 4" in changes
    assert compare_reports(json_path, json_path) == []


def test_reports_default_to_the_results_dir():
    json_path, _ = _small_preservation().save()
    assert json_path.parent == get_settings().results_dir
    assert len(list_reports()) == 1


def test_run_experiment_writes_to_the_requested_output(tmp_path):
    spec = ExperimentSpec(
        name="measure-preservation",
        lattice={"torus_width": 2},
        model={"q_values": [2.0], "torus_q": [2.0]},
        budget=1,
        seed=5,
        output=str(tmp_path / "out" / "mp"),
    )
    report = run_experiment(spec)
    json_path, csv_path = report.save()
    assert json_path == tmp_path / "out" / "mp.json"
    assert csv_path.exists()


def test_square_region_contains_the_square():
    for alpha in (math.pi / 2, math.pi / 3):
        lat, quad = square_region(alpha, 4)
        xs, ys = lat.coords[:, 0], lat.coords[:, 1]
        for x, y in quad.corners:
            assert xs.min() < x < xs.max()
            assert ys.min() < y < ys.max()


def test_crossing_universality_small_run():
    report = exp_crossing_universality(alpha=math.pi / 3, q=2.0, size=4, samples=8, seed=1, chains=2, burn_in=5)
    summary = report.summary
    assert 0.0 <= summary["p_square"] <= 1.0
    assert 0.0 <= summary["p_alpha"] <= 1.0
    assert summary["estimate"] == pytest.approx(summary["p_alpha"] - summary["p_square"])
    assert len(report.rows) == 16
    assert {r["lattice"] for r in report.rows} == {"pi/2", "alpha"}


def test_crossing_is_reproducible_across_workers():
    kwargs = dict(alpha=math.pi / 3, q=1.0, size=4, samples=6, seed=2, chains=3, burn_in=5)
    assert exp_crossing_universality(workers=1, **kwargs).rows == exp_crossing_universality(workers=2, **kwargs).rows


def test_rsw_probe():
    with pytest.raises(ParameterError):
        exp_rsw_probe(sizes=(2,))
    report = exp_rsw_probe(q=1.0, sizes=(4,), samples=6, seed=1, chains=2, burn_in=5)
    assert [s["size"] for s in report.summary["sizes"]] == [4]
    assert report.summary["target"] == [0.05, 0.95]
    assert len(report.rows) == 6


def test_iic_geometry_and_small_run():
    lat, origin, plus = iic_lattice(math.pi / 3, math.pi / 2, 2)
    assert origin != plus
    assert lat.coords[plus, 0] < lat.coords[origin, 0]
    assert lat.coords[plus, 1] > lat.coords[origin, 1]
    report = exp_iic_ratio(R=2, samples=2, seed=1, chains=1, gap=1, burn_in=5, max_checks=40)
    summary = report.summary
    assert summary["target"] == pytest.approx(math.sin(math.pi / 3) / (math.sin(math.pi / 3) + 1.0))
    assert summary["accepted"] == len(report.rows) <= 2
    assert summary["checks"] <= 40


@pytest.mark.slow
def test_iic_origin_fraction_matches_the_angle_ratio():
    alpha = math.pi / 6
    report = exp_iic_ratio(alpha=alpha, q=1.0, R=6, samples=1200, seed=7, chains=4)
    summary = report.summary
    assert summary["accepted"] == 1200
    assert summary["target"] == pytest.approx(1.0 / 3.0)
    assert abs(summary["estimate"] - summary["target"]) <= 3 * summary["stderr"]
    assert summary["plus_fraction"] == pytest.approx(1.0 - summary["estimate"])
    assert report.passed


@pytest.mark.slow
def test_square_crossing_does_not_depend_on_the_angle():
    report = exp_crossing_universality(alpha=math.pi / 3, q=1.0, size=16, samples=3000, seed=11, chains=4)
    summary = report.summary
    assert 0.2 < summary["p_square"] < 0.8
    assert abs(summary["z"]) < 3.0 or abs(summary["estimate"]) < 0.03
    assert report.passed


def test_arm_decay_on_constant_configurations():
    lat, center = arm_lattice(4)
    assert center == lat.vertex(7, 7)
    full = exp_arm_decay(sigma="1", radii=(2, 3, 4), samples=4, seed=1, inject="full", chains=2)
    assert full.summary["frequencies"] == {"2": 1.0, "3": 1.0, "4": 1.0}
    assert full.passed
    empty = exp_arm_decay(sigma="1", radii=(2, 3, 4), samples=4, seed=1, inject="empty", chains=2)
    assert empty.summary["frequencies"] == {"2": 0.0, "3": 0.0, "4": 0.0}
    assert empty.summary["estimate"] is None


def test_arm_decay_arguments():
    with pytest.raises(ParameterError):
        exp_arm_decay(inject="half")
    with pytest.raises(ParameterError):
        exp_arm_decay(radii=(1, 2), r=1)
