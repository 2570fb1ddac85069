import numpy as np
import pytest

from isochr import Volume, gen_smooth_random, gen_sphere, load_raw, save_raw
from isochr.errors import NonFiniteSampleError, ParameterError, RawSizeMismatchError


def test_load_raw_readback(tmp_path):
    path = tmp_path / "v.raw"
    np.arange(8, dtype="<f4").tofile(path)
    vol = load_raw(path, (2, 2, 2), dtype="f32", endianness="little")
    assert np.array_equal(vol.values, np.arange(8.0))
    assert vol.value_range == (0.0, 7.0)
    assert vol.source_dtype == "f32"


def test_load_raw_size_mismatch(tmp_path):
    path = tmp_path / "short.raw"
    np.arange(7, dtype="<f4").tofile(path)
    with pytest.raises(RawSizeMismatchError) as exc:
        load_raw(path, (2, 2, 2), dtype="f32")
    assert exc.value.expected == 32
    assert exc.value.actual == 28


@pytest.mark.parametrize("dtype", ["f32", "f64"])
@pytest.mark.parametrize("endianness", ["little", "big"])
def test_save_load_roundtrip(tmp_path, rng, dtype, endianness):
    for seed in range(5):
        dims = tuple(int(d) for d in rng.integers(2, 7, size=3))
        values = rng.normal(size=dims[0] * dims[1] * dims[2])
        if dtype == "f32":
            values = values.astype(np.float32).astype(np.float64)
        vol = Volume(dims=dims, values=values)
        path = tmp_path / f"r{seed}.raw"
        save_raw(vol, path, dtype=dtype, endianness=endianness)
        back = load_raw(path, dims, dtype=dtype, endianness=endianness)
        assert np.array_equal(back.values, vol.values)


def test_save_raw_byte_layout(tmp_path):
    vol = Volume(dims=(2, 2, 2), values=np.arange(8.0))
    path = tmp_path / "v.raw"
    save_raw(vol, path, dtype="f32", endianness="little")
    assert path.stat().st_size == 32
    assert np.array_equal(np.fromfile(path, dtype="<f4"), np.arange(8, dtype="<f4"))


def test_x_fastest_layout():
    vol = Volume(dims=(3, 2, 2), values=np.arange(12.0))
    assert vol.grid[1, 0, 0] == 1.0
    assert vol.grid[0, 1, 0] == 3.0
    assert vol.grid[0, 0, 1] == 6.0


def test_rejects_non_finite():
    values = np.arange(8.0)
    values[5] = np.nan
    with pytest.raises(NonFiniteSampleError) as exc:
        Volume(dims=(2, 2, 2), values=values)
    assert exc.value.index == 5
    values[5] = np.inf
    with pytest.raises(NonFiniteSampleError):
        Volume(dims=(2, 2, 2), values=values)


def test_constructor_validation():
    with pytest.raises(ParameterError):
        Volume(dims=(2, 2), values=np.arange(4.0))
    with pytest.raises(ParameterError):
        Volume(dims=(2, 2, 0), values=np.empty(0))
    with pytest.raises(ParameterError):
        Volume(dims=(2, 2, 2), values=np.arange(7.0))
    with pytest.raises(ParameterError):
        Volume(dims=(2, 2, 2), spacing=(1.0, 0.0, 1.0), values=np.arange(8.0))


def test_values_immutable():
    vol = Volume(dims=(2, 2, 2), values=np.arange(8.0))
    with pytest.raises(ValueError):
        vol.values[0] = 99.0


def test_value_range_matches_brute_force(rng):
    values = rng.normal(size=4 * 5 * 6)
    vol = Volume(dims=(4, 5, 6), values=values)
    assert vol.value_range == (values.min(), values.max())


def test_sphere_center_value_is_minus_radius():
    # odd dims put the default center on a lattice point
    vol = gen_sphere((9, 9, 9), radius=3.0)
    assert vol.grid[4, 4, 4] == -3.0


def test_sphere_reflection_symmetry():
    vol = gen_sphere((10, 12, 8), radius=3.0)
    g = vol.grid
    assert np.array_equal(g, g[::-1, :, :])
    assert np.array_equal(g, g[:, ::-1, :])
    assert np.array_equal(g, g[:, :, ::-1])


def test_sphere_is_signed_distance():
    vol = gen_sphere((6, 6, 6), center=(1.0, 2.0, 3.0), radius=2.5)
    d = np.sqrt((4 - 1.0) ** 2 + (5 - 2.0) ** 2 + (0 - 3.0) ** 2)
    assert vol.grid[4, 5, 0] == pytest.approx(d - 2.5, abs=0)


def test_generators_deterministic():
    a = gen_smooth_random((8, 9, 10), seed=42, num_modes=3)
    b = gen_smooth_random((8, 9, 10), seed=42, num_modes=3)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(
        gen_sphere((8, 8, 8), radius=2.0).values, gen_sphere((8, 8, 8), radius=2.0).values
    )


def test_different_seeds_differ():
    a = gen_smooth_random((8, 8, 8), seed=1, num_modes=3)
    b = gen_smooth_random((8, 8, 8), seed=2, num_modes=3)
    assert (a.values != b.values).any()


def test_smooth_random_bounded():
    for modes in (1, 4):
        vol = gen_smooth_random((12, 12, 12), seed=7, num_modes=modes)
        assert np.abs(vol.values).max() <= modes


def test_smooth_random_validates_modes():
    with pytest.raises(ParameterError):
        gen_smooth_random((4, 4, 4), seed=0, num_modes=0)
