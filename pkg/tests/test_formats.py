import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rstab.errors import ConfigError
from rstab.formats import MAGIC, load, path_header, read_binary, read_csv, save
from rstab.noise import NoiseSpec, sample_noise
from rstab.rough_core import GridPath, RoughPathGrid


def same(a, b):
    assert type(a) is type(b)
    if isinstance(a, RoughPathGrid):
        assert np.array_equal(a.area0, b.area0)
        a, b = a.base, b.base
    assert np.array_equal(a.times, b.times) and np.array_equal(a.values, b.values)


@pytest.mark.parametrize("suffix", [".csv", ".bin"])
@pytest.mark.parametrize("rough", [False, True])
def test_round_trip_bit_exact(tmp_path, suffix, rough):
    rp = sample_noise(NoiseSpec("fbm", 0.4, 2, 1.0, 64, 3))
    obj = rp if rough else rp.base
    save(obj, tmp_path / f"p{suffix}")
    same(obj, load(tmp_path / f"p{suffix}"))


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=30))
def test_csv_round_trip_arbitrary_floats(tmp_path_factory, vals):
    d = tmp_path_factory.mktemp("h")
    p = GridPath(np.arange(len(vals), dtype=float) * 0.1, np.array(vals)[:, None])
    save(p, d / "x.csv")
    same(p, load(d / "x.csv"))


def test_header_layout(tmp_path):
    assert path_header(2, True) == ["t", "x_1", "x_2", "A_11", "A_12", "A_21", "A_22"]
    p = GridPath(np.arange(3) * 0.5, np.ones((3, 2)))
    save(p, tmp_path / "y.csv", prefix="y")
    assert (tmp_path / "y.csv").read_text().startswith("t,y_1,y_2\n")
    same(p, load(tmp_path / "y.csv"))


@pytest.mark.parametrize("text,msg", [
    ("", "line 1"),
    ("s,x_1\n0,0\n1,1\n", "line 1"),
    ("t,x_1\n0,0\n1,1,2\n", "line 3"),
    ("t,x_1\n0,0\n1,abc\n", "line 3"),
    ("t,x_1\n0,0\n1,nan\n", "line 3"),
    ("t,x_1\n0,0\n", "two data rows"),
    ("t,x_1\n0,0\n0,1\n", "increasing"),
])
def test_malformed_csv(tmp_path, text, msg):
    f = tmp_path / "bad.csv"
    f.write_text(text)
    with pytest.raises(ConfigError, match=msg):
        read_csv(f)


def test_malformed_binary(tmp_path):
    rp = sample_noise(NoiseSpec("fbm", 0.4, 1, 1.0, 8, 3))
    save(rp, tmp_path / "ok.bin")
    raw = (tmp_path / "ok.bin").read_bytes()
    assert raw[:4] == MAGIC
    for name, data in [("short", raw[:6]), ("magic", b"XXXX" + raw[4:]), ("trunc", raw[:-8]),
                       ("version", raw[:4] + b"\x09\x00" + raw[6:])]:
        (tmp_path / name).write_bytes(data)
        with pytest.raises(ConfigError):
            read_binary(tmp_path / name)
