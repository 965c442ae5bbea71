import numpy as np
import pytest

from cosood.data import (MAGIC, BlobSpec, Dataset, Role, blob_means, feature_bounds, gen_blobs, gen_noise_ood,
                         gen_shifted_ood, read_dataset, write_dataset)
from cosood.errors import BadMagic, InvalidParams, ShapeMismatch, VersionMismatch


@pytest.mark.parametrize("classes,dim", [(4, 8), (5, 3), (2, 2)])
def test_blob_means_are_separated(classes, dim):
    spec = BlobSpec(classes, dim, 10, 1.0, seed=1, min_separation=6.0)
    m = blob_means(spec)
    gaps = np.linalg.norm(m[:, None] - m[None], axis=-1)[~np.eye(classes, dtype=bool)]
    assert gaps.min() >= spec.mean_distance - 1e-9


def test_blobs_deterministic_and_splits_differ():
    a = gen_blobs(4, 8, 50, 1.0, seed=3)
    b = gen_blobs(4, 8, 50, 1.0, seed=3)
    t = gen_blobs(4, 8, 50, 1.0, seed=3, split="test")
    np.testing.assert_array_equal(a.features, b.features)
    assert not np.array_equal(a.features, t.features)
    assert a.features.dtype == np.float32 and a.labels.dtype == np.int32
    assert a.features.shape == (200, 8) and np.bincount(a.labels).tolist() == [50] * 4
    assert a.role == Role.ID_TRAIN and t.role == Role.ID_TEST


def test_blob_spread_matches():
    ds = gen_blobs(2, 4, 4000, 0.7, seed=0)
    m = blob_means(BlobSpec(2, 4, 4000, 0.7, 0))
    resid = ds.features - m[ds.labels]
    assert resid.std() == pytest.approx(0.7, rel=0.03)


def test_shifted_ood_geometry():
    base = BlobSpec(4, 8, 300, 1.0, seed=2, min_separation=15.0)
    ood = gen_shifted_ood(base, 2.0, seed=5)
    m = blob_means(base)
    x = ood.features.reshape(4, 300, 8).mean(axis=1)
    shift = x - m
    np.testing.assert_allclose(np.linalg.norm(shift, axis=1), 2.0, atol=0.25)
    # shift directions are orthogonal to the span of the means
    q, _ = np.linalg.qr(m.T)
    assert np.abs(shift @ q).max() < 0.25
    assert ood.labels is None and ood.role == Role.OOD


def test_shift_must_be_positive():
    with pytest.raises(InvalidParams):
        gen_shifted_ood(BlobSpec(), 0.0, seed=0)


def test_noise_in_box():
    ds = gen_blobs(3, 5, 40, 1.0, seed=0)
    lo, hi = feature_bounds(ds)
    u = gen_noise_ood("uniform", (5,), 2000, 1, lo, hi)
    assert np.all(u.features >= lo.astype(np.float32)) and np.all(u.features <= hi.astype(np.float32))
    g = gen_noise_ood("gaussian", (5,), 20000, 1, lo, hi)
    np.testing.assert_allclose(g.features.mean(0), (lo + hi) / 2, atol=0.1 * (hi - lo).max())
    with pytest.raises(InvalidParams):
        gen_noise_ood("laplace", (5,), 10, 1, lo, hi)


def test_dataset_file_round_trip(tmp_path):
    ds = gen_blobs(3, 4, 10, 1.0, seed=0)
    write_dataset(ds, tmp_path / "a.ds")
    raw = (tmp_path / "a.ds").read_bytes()
    assert raw.startswith(MAGIC) and raw[len(MAGIC)] == 1 and raw[len(MAGIC) + 1] == int(Role.ID_TRAIN)
    back = read_dataset(tmp_path / "a.ds")
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.role == ds.role and back.num_classes == 3 and back.name == ds.name


def test_unlabelled_round_trip(tmp_path):
    ood = gen_noise_ood("uniform", (2, 3), 7, 0, 0.0, 1.0)
    write_dataset(ood, tmp_path / "o.ds")
    back = read_dataset(tmp_path / "o.ds")
    assert back.labels is None and back.features.shape == (7, 2, 3)


def test_dataset_file_errors(tmp_path):
    ds = gen_blobs(2, 3, 5, 1.0, seed=0)
    p = tmp_path / "d.ds"
    write_dataset(ds, p)
    raw = p.read_bytes()
    (tmp_path / "magic.ds").write_bytes(b"X" + raw[1:])
    with pytest.raises(BadMagic):
        read_dataset(tmp_path / "magic.ds")
    (tmp_path / "short.ds").write_bytes(raw[:-4])
    with pytest.raises(ShapeMismatch):
        read_dataset(tmp_path / "short.ds")
    v = bytearray(raw)
    v[len(MAGIC)] = 9
    (tmp_path / "ver.ds").write_bytes(bytes(v))
    with pytest.raises(VersionMismatch):
        read_dataset(tmp_path / "ver.ds")
    bad = bytearray(raw)
    bad[-4:] = np.int32(7).tobytes()
    (tmp_path / "label.ds").write_bytes(bytes(bad))
    with pytest.raises(ShapeMismatch):
        read_dataset(tmp_path / "label.ds")


def test_dataset_validation():
    with pytest.raises(ShapeMismatch):
        Dataset(np.zeros((3, 2), np.float32), np.zeros(2, np.int32), Role.ID_TRAIN, "x", num_classes=1)
