import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from omlab import io
from omlab.generators import gen_instance
from omlab.geometry import Domain, GridFunction


@given(arrays(np.float64, (8,), elements=st.floats(0, 1e300, allow_subnormal=True)))
def test_grid_json_roundtrip_is_exact(vals):
    f = GridFunction(Domain(1, 0, -3), vals)
    g = io.grid_from_dict(json.loads(json.dumps(io.grid_to_dict(f, name="x"))))
    assert g.domain == f.domain and np.array_equal(g.values, f.values)


def test_grid_csv_both_header_forms(tmp_path):
    a = io.grid_from_csv("# 1,0,2\n0\n0\n0\n8\n")
    b = io.grid_from_csv("# dim,K,m\n# 1,0,2\n0\n0\n0\n8\n")
    assert a.domain == b.domain == Domain(1, 0, -2)
    assert a.values.tolist() == b.values.tolist() == [0, 0, 0, 8]
    p = tmp_path / "f.csv"
    p.write_text("# 1,0,2\n0\n0\n0\n8\n")
    assert io.read_grid(p).values.tolist() == [0, 0, 0, 8]


@pytest.mark.parametrize("text", ["", "1\n2\n", "# 1,0\n1\n", "# 1,0,2\n1\nx\n", "# 1,0,2\n1\n2\n"])
def test_bad_csv(text):
    with pytest.raises(ValueError):
        io.grid_from_csv(text)


def test_bad_json_grid():
    with pytest.raises(ValueError):
        io.grid_from_dict({"dim": 1, "box_exp": 0})
    with pytest.raises(ValueError):
        io.grid_from_dict({"dim": 1, "box_exp": 0, "cell_exp": -1, "values": [1, "a"]})
    with pytest.raises(ValueError):
        io.grid_from_dict({"dim": 1, "box_exp": 0, "cell_exp": -1, "values": [1, -1]})


def test_instance_roundtrip(tmp_path):
    inst = gen_instance("staircase", Domain(2, 1, -2), 4, r=2.0)
    p = tmp_path / "inst.json"
    io.write_json(p, io.instance_to_dict(inst))
    back = io.read_instance(p)
    assert (back.kind, back.seed, back.r, back.a1_u, back.a1_vr) == \
        (inst.kind, inst.seed, inst.r, inst.a1_u, inst.a1_vr)
    for x, y in ((back.f, inst.f), (back.u, inst.u), (back.v, inst.v)):
        assert np.array_equal(x.values, y.values)
    obj = io.instance_to_dict(inst)
    obj["v"]["box_exp"] = 2
    with pytest.raises(ValueError):
        io.instance_from_dict(obj)
    del obj["r"]
    with pytest.raises(ValueError):
        io.instance_from_dict(obj)


def test_write_to_stdout(capsys):
    io.write_json("-", {"a": 1})
    io.write_text(None, "x\n")
    assert capsys.readouterr().out == '{\n  "a": 1\n}\nx\n'
