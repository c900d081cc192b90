import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpfluor.io import OutputExistsError, config_hash, format_value, read_metadata, read_table, write_table
from mpfluor.models import ModelSpec
from mpfluor.propagator import KrylovConfig
from mpfluor.spectra import SpectrumDataset, dataset_metadata

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=200)
@given(finite)
def test_float_format_is_exact(x):
    s = format_value(x)
    assert float(s) == x and format_value(float(s)) == s


def _dataset():
    rng = np.random.default_rng(3)
    m = ModelSpec(alpha=1.0, g_a=0.1, g_b=0.01, gamma=0.02)
    ds = SpectrumDataset(np.linspace(0.5, 1.5, 7), np.array([0.0, 10.0, 20.0]), rng.random((3, 7)) * 1e-3)
    ds.metadata = dataset_metadata(m, KrylovConfig())
    return ds


def test_spectrum_round_trip_bytes(tmp_path):
    ds = _dataset()
    a = ds.to_csv(tmp_path / "a.csv")
    back = SpectrumDataset.from_csv(a)
    assert np.array_equal(back.P, ds.P) and np.array_equal(back.omega_grid, ds.omega_grid)
    assert np.array_equal(back.time_grid, ds.time_grid)
    b = back.to_csv(tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()


def test_csv_layout(tmp_path):
    p = _dataset().to_csv(tmp_path / "s.csv")
    raw = p.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    lines = raw.decode("utf-8").splitlines()
    assert lines[0] == "t,omega_b,P" and len(lines) == 1 + 3 * 7
    # 17 significant digits in scientific notation
    assert all(len(v.split("e")[0].replace("-", "").replace(".", "")) == 17 for v in lines[1].split(","))
    assert "config_hash" in read_metadata(p)


def test_never_overwrite_without_flag(tmp_path):
    p = write_table(tmp_path / "x.csv", ("a",), [(1.0,)], {"config": {}})
    before = p.read_bytes()
    with pytest.raises(OutputExistsError):
        write_table(p, ("a",), [(2.0,)], {"config": {}})
    assert p.read_bytes() == before
    write_table(p, ("a",), [(2.0,)], {"config": {}}, overwrite=True)
    assert read_table(p)[1][0, 0] == 2.0


def _perturbed(value):
    if isinstance(value, bool):
        return not value
    if isinstance(value, int):
        return value + 1
    if isinstance(value, float):
        return value * 1.5 + 0.125
    if value is None:
        return 1
    return str(value) + "_x"


def test_hash_changes_iff_field_changes():
    m = ModelSpec(alpha=1.0, g_a=0.1, g_b=0.01, gamma=0.02)
    cfg = KrylovConfig()
    base = dataset_metadata(m, cfg)["config"]
    h0 = config_hash(base)
    assert config_hash(dataset_metadata(ModelSpec(**m.to_dict()), KrylovConfig())["config"]) == h0
    seen = {h0}
    for section in ("model", "numerics"):
        for key, value in base[section].items():
            changed = dict(base, **{section: dict(base[section], **{key: _perturbed(value)})})
            h = config_hash(changed)
            assert h != h0, f"{section}.{key} does not enter the hash"
            seen.add(h)
    assert len(seen) == 1 + len(base["model"]) + len(base["numerics"])
    # key order is irrelevant
    assert config_hash(dict(reversed(list(base.items())))) == h0


def test_model_round_trip_through_dict():
    m = ModelSpec(family="array", n_atoms=3, omega_a=0.5, alpha=3.0, g_a=0.03, g_b=0.01, gamma=0.02, n_b_max=2)
    d = m.to_dict()
    assert ModelSpec.from_dict(d) == m
    assert set(d) == {f.name for f in dataclasses.fields(ModelSpec)}
