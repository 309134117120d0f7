from pathlib import Path

import pytest

from diracgraph_plots import FigureRequest, SchemaError, render
from diracgraph_plots.cli import main


TIMESERIES = """t,mass,energy,graph_norm
0.0,1.0,0.5,2.0
0.1,1.0000000001,0.5000000002,2.0
0.2,0.9999999998,0.4999999999,2.0
"""

BRANCH = """eps,omega,sup_u,sup_w,l2_physical_mass,action,newton_iters,min_singular_value,residual_norm
0.0,0.5,1.41,0.70,,,0,0.0015,1e-13
0.01,0.49,1.42,0.71,0.6,0.001,3,0.0015,1e-14
0.02,0.48,1.42,0.71,0.85,0.005,3,0.0016,1e-14
"""

PROFILE = """edge_id,node_kind,x,re_phi,im_phi,re_chi,im_chi
0,int,0.0,1.0,0.0,,
0,int,0.5,0.8,0.1,,
0,half,0.25,,,0.1,-0.05
0,half,0.75,,,0.05,-0.02
1,int,0.0,1.0,0.0,,
1,half,0.25,,,0.1,0.0
"""

SWEEP = """c,norm_minus,norm_plus
1.0,0.5,0.5
2.0,0.25,0.26
4.0,0.12,0.13
8.0,0.06,0.07
slope,-1.02,-0.98
"""


def write(tmp_path: Path, name: str, text: str) -> Path:
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.mark.parametrize("kind,text", [
    ("timeseries", TIMESERIES),
    ("branch", BRANCH),
    ("profile", PROFILE),
    ("loglog", SWEEP),
])
def test_render_each_kind(tmp_path, kind, text):
    src = write(tmp_path, "in.csv", text)
    out = tmp_path / f"{kind}.png"
    result = render(FigureRequest(input_path=str(src), kind=kind, output_path=str(out)))
    assert out.is_file()
    assert out.stat().st_size > 0
    assert result.output_path == str(out)


def test_render_is_deterministic(tmp_path):
    src = write(tmp_path, "in.csv", SWEEP)
    out1, out2 = tmp_path / "a.png", tmp_path / "b.png"
    render(FigureRequest(input_path=str(src), kind="loglog", output_path=str(out1)))
    render(FigureRequest(input_path=str(src), kind="loglog", output_path=str(out2)))
    assert out1.read_bytes() == out2.read_bytes()


def test_render_never_mutates_input(tmp_path):
    src = write(tmp_path, "in.csv", BRANCH)
    before = src.read_bytes()
    render(FigureRequest(input_path=str(src), kind="branch",
                         output_path=str(tmp_path / "o.png")))
    assert src.read_bytes() == before


def test_header_only_csv_gives_blank_axes(tmp_path):
    src = write(tmp_path, "in.csv", "t,mass,energy,graph_norm\n")
    out = tmp_path / "o.png"
    code = main(["--kind", "timeseries", "--in", str(src), "--out", str(out)])
    assert code == 0
    assert out.is_file()


def test_missing_column_names_the_column(tmp_path):
    src = write(tmp_path, "in.csv", "t,mass,energy\n0,1,2\n")
    with pytest.raises(SchemaError, match="graph_norm"):
        render(FigureRequest(input_path=str(src), kind="timeseries",
                             output_path=str(tmp_path / "o.png")))
    assert main(["--kind", "timeseries", "--in", str(src),
                 "--out", str(tmp_path / "o.png")]) == 2


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(SchemaError):
        FigureRequest(input_path="x", kind="pie", output_path="y")


def test_loglog_annotations_carry_slopes(tmp_path):
    src = write(tmp_path, "in.csv", SWEEP)
    result = render(FigureRequest(input_path=str(src), kind="loglog",
                                  output_path=str(tmp_path / "o.png")))
    assert result.annotations["slope_minus"] == -1.02
    assert result.annotations["slope_plus"] == -0.98


def test_cli_prints_annotations(tmp_path, capsys):
    src = write(tmp_path, "in.csv", SWEEP)
    assert main(["--kind", "loglog", "--in", str(src),
                 "--out", str(tmp_path / "o.png")]) == 0
    out = capsys.readouterr().out
    assert "slope_minus=-1.02" in out
