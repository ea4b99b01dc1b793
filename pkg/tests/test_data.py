from pathlib import Path

import numpy as np
import pytest

from kandgcnn.data import (
    SCALE_RANGE,
    DatasetCache,
    Mesh,
    augment,
    convert_modelnet,
    decode_cache,
    encode_cache,
    load_split,
    normalize_sphere,
    parse_off,
    read_cache,
    sample_surface,
    synth_dataset,
    synth_shape,
    write_cache,
)
from kandgcnn.errors import DomainError, FormatError, ParseError

FIXTURES = Path(__file__).parent / "fixtures" / "off"
GOOD = ["tetra.off", "quad.off", "fused_header.off", "no_header.off"]
BAD = {"bad_index.off": 6, "bad_vertex.off": 4, "bad_counts.off": 2, "bad_arity.off": 6,
       "truncated.off": 6}


def test_tetrahedron():
    mesh = parse_off((FIXTURES / "tetra.off").read_bytes())
    assert mesh.vertices.shape == (4, 3)
    assert mesh.faces.shape == (4, 3)


def test_quad_fan():
    mesh = parse_off((FIXTURES / "quad.off").read_text())
    np.testing.assert_array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])


def test_fused_header():
    mesh = parse_off((FIXTURES / "fused_header.off").read_text())
    assert mesh.vertices.shape == (3, 3)
    np.testing.assert_array_equal(mesh.faces, [[0, 1, 2]])


@pytest.mark.parametrize("name", GOOD)
def test_corpus_accepts(name):
    assert len(parse_off((FIXTURES / name).read_bytes()).faces) >= 1


@pytest.mark.parametrize("name, line", sorted(BAD.items()))
def test_corpus_rejects_with_line(name, line):
    with pytest.raises(ParseError) as info:
        parse_off((FIXTURES / name).read_bytes())
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def triangle():
    return Mesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))


def test_samples_stay_in_triangle():
    pts = sample_surface(triangle(), 2000, seed=3)
    assert np.all(pts[:, :2] >= 0)
    assert np.all(pts[:, 0] + pts[:, 1] <= 1 + 1e-9)
    np.testing.assert_array_equal(pts[:, 2], 0)


def test_area_weighting():
    # areas 1 and 3
    v = np.array([[0, 0, 0], [2, 0, 0], [0, 1, 0],
                  [10, 0, 0], [16, 0, 0], [10, 1, 0]], dtype=float)
    mesh = Mesh(v, np.array([[0, 1, 2], [3, 4, 5]]))
    pts = sample_surface(mesh, 10_000, seed=11)
    frac = np.mean(pts[:, 0] >= 10)
    assert abs(frac - 0.75) < 0.03


def test_sampling_deterministic():
    mesh = parse_off((FIXTURES / "tetra.off").read_text())
    np.testing.assert_array_equal(sample_surface(mesh, 50, 7), sample_surface(mesh, 50, 7))


def test_zero_area():
    mesh = Mesh(np.zeros((3, 3)), np.array([[0, 1, 2]]))
    with pytest.raises(DomainError):
        sample_surface(mesh, 10, 0)


def test_normalize_two_points():
    np.testing.assert_allclose(normalize_sphere([[0, 0, 0], [2, 0, 0]]), [[-1, 0, 0], [1, 0, 0]])


def test_normalize_idempotent_and_unit(rng):
    pts = normalize_sphere(rng.normal(size=(100, 3)) * 5 + 3)
    assert abs(np.linalg.norm(pts, axis=1).max() - 1) < 1e-9
    assert np.linalg.norm(pts.mean(axis=0)) < 1e-6
    np.testing.assert_allclose(normalize_sphere(pts), pts, atol=1e-12)


def test_normalize_coincident():
    with pytest.raises(DomainError):
        normalize_sphere(np.ones((4, 3)))


def test_augment_ranges(rng):
    ones = np.ones((1, 3))
    zeros = np.zeros((1, 3))
    for seed in range(500):
        shift = augment(zeros, seed)[0]
        scale = augment(ones, seed)[0] - shift
        assert np.all(np.abs(shift) <= 0.2)
        assert np.all((scale >= SCALE_RANGE[0] - 1e-12) & (scale <= SCALE_RANGE[1] + 1e-12))
    pts = rng.normal(size=(10, 3))
    np.testing.assert_array_equal(augment(pts, 5), augment(pts, 5))


def test_sphere_radius_before_normalization(rng):
    r = np.linalg.norm(synth_shape("sphere", 500, rng), axis=1)
    assert np.all(np.abs(r - 1) <= 0.02)


def test_synth_counts_and_normalization():
    cache = synth_dataset(50, 64, seed=2)
    assert len(cache) == 200
    assert sorted(set(cache.labels.tolist())) == [0, 1, 2, 3]
    assert np.all(np.bincount(cache.labels) == 50)
    for pts in cache.points[::37]:
        p = pts.astype(np.float64)
        assert abs(np.linalg.norm(p, axis=1).max() - 1) < 1e-6
        assert np.linalg.norm(p.mean(axis=0)) < 1e-6


def test_synth_cache_bit_identical(tmp_path):
    write_cache(tmp_path / "a.kdc", synth_dataset(5, 32, seed=9))
    write_cache(tmp_path / "b.kdc", synth_dataset(5, 32, seed=9))
    assert (tmp_path / "a.kdc").read_bytes() == (tmp_path / "b.kdc").read_bytes()
    assert (tmp_path / "a.kdc").read_bytes() != encode_cache(synth_dataset(5, 32, seed=10))


def test_cache_round_trip(tmp_path, rng):
    pts = [rng.normal(size=(n, 3)).astype(np.float32) for n in (5, 9, 1)]
    cache = DatasetCache(pts, np.array([3, 0, 7]), "train")
    write_cache(tmp_path / "train.kdc", cache)
    back = read_cache(tmp_path / "train.kdc")
    assert back.labels.tolist() == [3, 0, 7]
    for a, b in zip(pts, back.points):
        assert a.tobytes() == b.tobytes()
    raw = (tmp_path / "train.kdc").read_bytes()
    assert raw[:4] == b"KDC1"
    assert int.from_bytes(raw[4:8], "little") == 3
    assert len(raw) == 8 + 3 * 8 + 12 * (5 + 9 + 1)


def test_cache_rejects_bad_input():
    with pytest.raises(FormatError):
        decode_cache(b"XXXX\x00\x00\x00\x00")
    good = encode_cache(synth_dataset(1, 4, seed=0, num_classes=1))
    with pytest.raises(FormatError):
        decode_cache(good[:-4])
    with pytest.raises(FormatError):
        decode_cache(good + b"\x00")


def test_convert_two_class_tree(tmp_path):
    tetra = (FIXTURES / "tetra.off").read_text()
    quad = (FIXTURES / "fused_header.off").read_text()
    root = tmp_path / "ModelNet"
    for cls, text in (("zebra", tetra), ("apple", quad)):
        for split, count in (("train", 2), ("test", 1)):
            d = root / cls / split
            d.mkdir(parents=True)
            for i in range(count):
                (d / f"{cls}_{i:04d}.off").write_text(text)
    out = tmp_path / "cache"
    classes = convert_modelnet(root, out, n_points=32, seed=1)
    assert classes == ["apple", "zebra"]
    train, test = load_split(out, "train"), load_split(out, "test")
    assert train.labels.tolist() == [0, 0, 1, 1]
    assert test.labels.tolist() == [0, 1]
    assert all(p.shape == (32, 3) for p in train.points)
    assert (out / "classes.txt").read_text().splitlines() == ["0\tapple", "1\tzebra"]
    # worker count does not change the output
    out2 = tmp_path / "cache2"
    convert_modelnet(root, out2, n_points=32, seed=1, workers=2)
    assert (out / "train.kdc").read_bytes() == (out2 / "train.kdc").read_bytes()


def test_convert_reports_file(tmp_path):
    d = tmp_path / "root" / "chair" / "train"
    d.mkdir(parents=True)
    (d / "broken.off").write_text((FIXTURES / "bad_index.off").read_text())
    (tmp_path / "root" / "chair" / "test").mkdir()
    with pytest.raises(ParseError, match="broken.off"):
        convert_modelnet(tmp_path / "root", tmp_path / "out", n_points=8)
