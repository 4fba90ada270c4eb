"""Atlas assembly, resolution runs, serialization, and the CLI."""

import json
import math
import warnings

import numpy as np
import pytest

from conewarp.cli import main as cli_main
from conewarp.errors import NotFreeError
from conewarp.groups import cyclic_group, noncyclic_group
from conewarp.pipeline import (
    PipelineConfig,
    assemble_atlas,
    mu_floor,
    run_full_resolution,
)

warnings.filterwarnings("ignore", category=RuntimeWarning)

_cache = {}


def fast_cfg():
    return PipelineConfig(grid_1d=4096, grid_2d=64, cap_search_budget=8)


def atlas_21():
    if "a21" not in _cache:
        _cache["a21"] = assemble_atlas(cyclic_group(2, 1, 1), 0.05, fast_cfg())
    return _cache["a21"]


def run_513():
    if "run" not in _cache:
        _cache["run"] = run_full_resolution(cyclic_group(5, 1, 3), 0.05, fast_cfg())
    return _cache["run"]


def test_mu_floor_monotone():
    vals = [mu_floor(n) for n in (1, 2, 3, 5, 7)]
    assert all(0 < v < 0.1 for v in vals)
    assert vals == sorted(vals)


def test_trivial_atlas():
    atlas = assemble_atlas(cyclic_group(1, 0, 0), 0.05, fast_cfg())
    assert atlas.passed
    assert len(atlas.regions) == 1
    assert atlas.cone_at_infinity["round"] is True


def test_atlas_21_smooth_cap():
    atlas = atlas_21()
    assert atlas.passed, atlas.summary()
    assert [r.id for r in atlas.regions] == ["cone_tail", "edge_body",
                                             "glue_collar", "conical_cap"]
    assert len(atlas.singular_points) == 1
    assert atlas.singular_points[0].child.is_trivial  # p = 1: smooth ball
    # interface graph: connected chain, each interface joins two listed regions
    ids = {r.id for r in atlas.regions} | {"inner_cone"}
    for iface in atlas.interfaces:
        assert iface.a in ids and iface.b in ids
        assert iface.report_name in atlas.reports


def test_atlas_53_child_group():
    run = run_513()
    name, atlas = run.atlases[0]
    assert (atlas.n, atlas.p) == (5, 3)
    child = atlas.singular_points[0].child
    assert child.n == 3  # order-3 child group


def test_run_513_shape_and_pass():
    run = run_513()
    assert run.passed
    assert len(run.atlases) == 2          # orders 5 and 3; trivial leaf uncounted
    orders = [a.n for _, a in run.atlases]
    assert orders == [5, 3]
    assert all(m["residual"] <= m["tolerance"] for m in run.matchings)


def test_run_deterministic():
    run1 = run_513()
    run2 = run_full_resolution(cyclic_group(5, 1, 3), 0.05, fast_cfg())
    for (n1, a1), (n2, a2) in zip(run1.atlases, run2.atlases):
        assert n1 == n2
        assert set(a1.reports) == set(a2.reports)
        for k in a1.reports:
            assert a1.reports[k].min_margin == a2.reports[k].min_margin
            assert a1.reports[k].argmin == a2.reports[k].argmin


def test_atlas_json_roundtrip(tmp_path):
    atlas = atlas_21()
    text = atlas.to_json()
    data = json.loads(text)
    assert {r["id"] for r in data["regions"]} == {r.id for r in atlas.regions}
    # warp functions reload and agree
    from conewarp.warpfn import WarpFunction
    reg = next(r for r in data["regions"] if r["id"] == "edge_body")
    rho = WarpFunction.deserialize(reg["warps"]["rho"])
    orig = next(r for r in atlas.regions if r.id == "edge_body").warps["rho"]
    xs = np.linspace(1e-6, orig.b * 0.99, 400)
    np.testing.assert_array_equal(rho(xs), orig(xs))


def test_not_free_rejected():
    with pytest.raises(NotFreeError):
        assemble_atlas(cyclic_group(4, 1, 2), 0.05, fast_cfg())


def test_noncyclic_atlas():
    a = np.diag([np.exp(1j * np.pi / 3), np.exp(-1j * np.pi / 3)])
    b = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
    group = noncyclic_group([a, b])   # binary dihedral, order 12
    atlas = assemble_atlas(group, 0.05, fast_cfg())
    assert atlas.passed, atlas.summary()
    assert atlas.regions[0].kind == "berger_general"
    assert len(atlas.singular_points) >= 1
    for sp in atlas.singular_points:
        assert sp.child.kind == "cyclic"
    assert atlas.cone_at_infinity["round"] is False


# ------------------------------------------------------------------ CLI


def test_cli_resolve_certify_plot(tmp_path):
    out = tmp_path / "run"
    code = cli_main(["resolve", "--group", "cyclic:2,1,1", "--epsilon", "0.05",
                     "--out", str(out),
                     "--config", str(_write_cfg(tmp_path))])
    assert code == 0
    atlases = sorted(out.glob("atlas_*.json"))
    assert len(atlases) == 1
    assert (out / "run_summary.txt").exists()
    assert (out / "reports.json").exists()
    code = cli_main(["certify", "--atlas", str(atlases[0]), "--grid", "48"])
    assert code == 0
    csv = tmp_path / "field.csv"
    code = cli_main(["plot-data", "--atlas", str(atlases[0]),
                     "--field", "ricci-min", "--out", str(csv)])
    assert code == 0
    rows = np.loadtxt(csv, delimiter=",", skiprows=1)
    assert rows.shape[1] == 3
    assert np.min(rows[:, 2]) >= -1e-8


def _write_cfg(tmp_path):
    cfg = tmp_path / "conf.txt"
    cfg.write_text("grid_1d = 4096\ngrid_2d = 64\ncap_search_budget = 8\n")
    return cfg


def test_cli_recursion_and_errors(capsys):
    assert cli_main(["recursion", "--group", "cyclic:5,1,3"]) == 0
    out = capsys.readouterr().out
    assert "order 5" in out and "[2, 3]" in out
    assert cli_main(["recursion", "--group", "cyclic:4,1,2"]) == 2  # not free
    assert cli_main(["recursion", "--group", "nonsense"]) == 2
    assert cli_main(["bogus-subcommand"]) == 2


def test_tree_machine_readable():
    from conewarp.groups import resolution_tree
    d = resolution_tree(cyclic_group(5, 1, 3)).as_dict()
    assert d["order"] == 5 and d["children"][0]["order"] == 3


def test_chart_csv_dump(tmp_path):
    from conewarp.curvature import BergerSphere, ansatz_to_chart, dump_chart_csv
    from conewarp.warpfn import WarpFunction
    from conewarp import expr as ex
    f = WarpFunction(0.0, math.pi / 2, [], [ex.sin(2.0 * ex.X) / 2.0])
    chart = ansatz_to_chart(BergerSphere(f, 1.0))
    out = tmp_path / "chart.csv"
    dump_chart_csv(chart, (8, 4, 4), out)
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    assert rows.shape[0] == 8 * 4 * 4


def test_certify_gluing_op():
    from conewarp.certify import certify_gluing
    atlas = atlas_21()
    reports = certify_gluing(atlas)
    assert {i.report_name for i in atlas.interfaces} <= set(reports)
    assert all(r.passed for r in reports.values())
