import numpy as np
import pytest
from scipy import ndimage

from tumorlab import ShapeParams, SoftMask, elastic_deform, ellipsoid_mask, soft_edge
from tumorlab.params import substream
from tumorlab.shape import deform_array, ellipsoid_array


def _sphere_params(radius, center=(32, 32, 32), deform=0.0, softness=1.0):
    return ShapeParams(
        center=center,
        radius_mm=radius,
        half_axes_mm=(radius, radius, radius),
        deform_strength=deform,
        edge_softness=softness,
    )


def test_sphere_volume_matches_analytic():
    for r in (8.0, 12.0):
        dims = (64, 64, 64)
        mask = ellipsoid_mask(_sphere_params(r), dims, (1.0, 1.0, 1.0))
        count = mask.data.sum()
        analytic = 4.0 / 3.0 * np.pi * r**3
        assert abs(count - analytic) / analytic < 0.05, (r, count, analytic)


def test_ellipsoid_clipped_at_corner():
    params = _sphere_params(6.0, center=(0, 0, 0))
    mask = ellipsoid_mask(params, (16, 16, 16), (1.0, 1.0, 1.0))
    assert mask.data.max() == 1.0
    # roughly one octant of the sphere survives
    assert mask.data.sum() < 0.2 * 4 / 3 * np.pi * 6**3


def test_ellipsoid_symmetric_under_reflection():
    params = _sphere_params(7.0, center=(16, 16, 16))
    m = ellipsoid_mask(params, (33, 33, 33), (1.0, 1.0, 1.0)).data
    assert np.array_equal(m, m[::-1, :, :])
    assert np.array_equal(m, m[:, ::-1, :])
    assert np.array_equal(m, m[:, :, ::-1])


def test_ellipsoid_respects_anisotropic_spacing():
    # 8 mm half-axis along x at 2 mm spacing reaches only 4 voxels out
    params = ShapeParams(center=(16, 16, 16), radius_mm=8.0,
                         half_axes_mm=(8.0, 8.0, 8.0))
    m = ellipsoid_array(params.center, params.half_axes_mm, (33, 33, 33), (2.0, 1.0, 1.0))
    xs = np.nonzero(m.any(axis=(1, 2)))[0]
    assert xs.min() == 12 and xs.max() == 20
    ys = np.nonzero(m.any(axis=(0, 2)))[0]
    assert ys.min() == 8 and ys.max() == 24


def test_ellipsoid_volume_scales_cubically():
    dims = (96, 96, 96)
    v1 = ellipsoid_mask(_sphere_params(8.0, (48, 48, 48)), dims, (1, 1, 1)).data.sum()
    v2 = ellipsoid_mask(_sphere_params(16.0, (48, 48, 48)), dims, (1, 1, 1)).data.sum()
    assert 7.2 <= v2 / v1 <= 8.8


def test_offset_subbox_matches_full_volume():
    params = _sphere_params(5.0, center=(20, 20, 20))
    full = ellipsoid_array(params.center, params.half_axes_mm, (40, 40, 40), (1, 1, 1))
    sub = ellipsoid_array(params.center, params.half_axes_mm, (20, 20, 20), (1, 1, 1),
                          offset=(10, 10, 10))
    assert np.array_equal(full[10:30, 10:30, 10:30], sub)


def test_deform_zero_strength_identity():
    mask = ellipsoid_mask(_sphere_params(6.0, (16, 16, 16)), (33, 33, 33), (1, 1, 1))
    out = elastic_deform(mask, 0.0, substream(0, 0))
    assert np.array_equal(out.data, mask.data)


def test_deform_deterministic():
    mask = ellipsoid_mask(_sphere_params(6.0, (16, 16, 16)), (33, 33, 33), (1, 1, 1))
    a = elastic_deform(mask, 4.0, substream(11, 0))
    b = elastic_deform(mask, 4.0, substream(11, 0))
    assert np.array_equal(a.data, b.data)


def test_deform_volume_quasi_preserving_and_connected():
    # strong preset-range deformation: volume within +-30% and connected,
    # measured over 50 seeded trials
    dims = (72, 72, 72)
    base = ellipsoid_array((36, 36, 36), (16.0, 16.0, 16.0), dims, (1, 1, 1))
    base_vol = base.sum()
    structure = np.ones((3, 3, 3), bool)
    for seed in range(50):
        rng = substream(seed, 3)
        strength = float(substream(seed, 4).uniform(5.0, 10.0))
        out = deform_array(base, strength, rng)
        vol = out.sum()
        assert 0.7 * base_vol <= vol <= 1.3 * base_vol, (seed, vol / base_vol)
        _, n = ndimage.label(out, structure=structure)
        assert n == 1, f"seed {seed} produced {n} components"


def test_deform_displacement_bounded():
    # smoothed field is a convex combination of U(-1,1), so voxels farther
    # than the amplitude from the original support can never turn on
    dims = (48, 48, 48)
    base = ellipsoid_array((24, 24, 24), (8.0, 8.0, 8.0), dims, (1, 1, 1))
    strength = 5.0
    out = deform_array(base, strength, substream(99, 0))
    reach = ndimage.binary_dilation(base, iterations=int(np.ceil(strength)) + 1)
    assert not out[~reach].any()


def test_soft_edge_interior_saturates():
    mask = np.zeros((32, 32, 32), dtype=np.float32)
    mask[4:28, 4:28, 4:28] = 1.0
    out = soft_edge(SoftMask(mask), 1.0)
    assert out.data[16, 16, 16] == pytest.approx(1.0, abs=1e-6)
    assert out.data[0, 0, 0] == pytest.approx(0.0, abs=1e-6)


def test_soft_edge_empty_mask():
    out = soft_edge(SoftMask(np.zeros((8, 8, 8), dtype=np.float32)), 1.0)
    assert out.data.sum() == 0.0


def test_soft_edge_halfspace_boundary_value():
    # blurred step sampled at the interface plane: the 1D profile of a
    # blurred half-space crosses exactly 1/2 at the boundary
    from tumorlab import ScalarVolume, sample_trilinear

    mask = np.zeros((24, 24, 24), dtype=np.float32)
    mask[:12] = 1.0  # occupied voxels 0..11, interface plane at x = 11.5
    out = soft_edge(SoftMask(mask), 1.0)
    val = sample_trilinear(ScalarVolume(out.data.astype(np.float64)), (11.5, 12.0, 12.0))
    assert val == pytest.approx(0.5, abs=0.01)


def test_soft_edge_stays_near_support():
    params = _sphere_params(6.0, (16, 16, 16))
    binary = ellipsoid_mask(params, (33, 33, 33), (1, 1, 1))
    sigma = 1.2
    out = soft_edge(binary, sigma)
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0
    # the half-level set stays within a ceil(4 sigma) dilation of the support
    reach = ndimage.binary_dilation(binary.data > 0, iterations=int(np.ceil(4 * sigma)))
    assert not (out.data >= 0.5)[~reach].any()


def test_soft_edge_requires_positive_sigma():
    with pytest.raises(ValueError):
        soft_edge(SoftMask(np.zeros((4, 4, 4), dtype=np.float32)), 0.0)


def test_shape_params_validation():
    with pytest.raises(ValueError):
        ShapeParams(center=(0, 0, 0), radius_mm=-1, half_axes_mm=(1, 1, 1))
    with pytest.raises(ValueError):
        ShapeParams(center=(0, 0, 0), radius_mm=1, half_axes_mm=(1, -1, 1))
    with pytest.raises(ValueError):
        ShapeParams(center=(0, 0, 0), radius_mm=1, half_axes_mm=(1, 1, 1), deform_strength=-0.5)
