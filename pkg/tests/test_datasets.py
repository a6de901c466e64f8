import gzip
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lgn import datasets as ds


def idx_bytes(arr):
    arr = np.asarray(arr, dtype=np.uint8)
    return bytes([0, 0, 8, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes()


def write_idx_set(directory, n, seed=0, compress=False):
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, (n, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, n, dtype=np.uint8)
    for split in ("train", "test"):
        img, lbl = ds.IDX_FILES[split]
        for stem, arr in ((img, images), (lbl, labels)):
            data = idx_bytes(arr)
            if compress:
                (directory / (stem + ".gz")).write_bytes(gzip.compress(data))
            else:
                (directory / stem).write_bytes(data)
    return images, labels


def naive_class(x, y, r_small=0.1, r_big=0.5):
    """Region membership written from the geometric description."""
    d_right = math.sqrt((x - 1.5 * r_big) ** 2 + (y - r_big) ** 2)
    d_left = math.sqrt((x - 0.5 * r_big) ** 2 + (y - r_big) ** 2)
    if d_right < r_small or d_left < r_small:
        return 2
    in_yin = d_right <= r_small or (r_small < d_left <= 0.5 * r_big) or (y > r_big and d_right > 0.5 * r_big)
    return 1 if in_yin else 0


class TestYinYang:
    def test_deterministic(self):
        a = ds.yinyang_dataset(500, 7)
        b = ds.yinyang_dataset(500, 7)
        assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.labels, b.labels)
        c = ds.yinyang_dataset(500, 8)
        assert not np.array_equal(a.inputs, c.inputs)

    def test_labels_match_geometry(self):
        x, y, labels = ds.generate_yinyang(3000, 3)
        for xi, yi, c in zip(x, y, labels):
            assert naive_class(xi, yi) == c
            assert (xi - 0.5) ** 2 + (yi - 0.5) ** 2 <= 0.25

    def test_balanced(self):
        _, _, labels = ds.generate_yinyang(200_000, 1)
        frac = np.bincount(labels, minlength=3) / labels.size
        np.testing.assert_allclose(frac, 1 / 3, atol=0.01)

    def test_reference_points(self):
        # dot centres, a point deep in the lower half, and one in the upper half
        assert ds.yinyang_class(0.75, 0.5) == 2
        assert ds.yinyang_class(0.25, 0.5) == 2
        assert ds.yinyang_class(0.5, 0.9) == 1
        assert ds.yinyang_class(0.5, 0.1) == 0

    def test_shapes(self):
        d = ds.yinyang_dataset(100, 0)
        assert d.inputs.shape == (100, 24)
        assert d.n_classes == 3
        assert set(np.unique(d.inputs)) <= {0, 1}

    def test_invalid(self):
        with pytest.raises(ValueError):
            ds.generate_yinyang(0, 0)


class TestEncoding:
    def test_examples(self):
        assert ds.encode_coordinates(0.5, 0.0, 4).tolist() == [1, 0, 0, 0, 0, 0, 0, 0]
        assert ds.encode_coordinates(0.75, 0.0625, 4).tolist() == [1, 1, 0, 0, 0, 0, 0, 1]

    @given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True), st.integers(1, 16))
    def test_round_trip(self, x, y, bits):
        code = ds.encode_coordinates(x, y, bits)
        assert 0 <= x - ds.decode_coordinate(code[:bits]) < 2.0**-bits
        assert 0 <= y - ds.decode_coordinate(code[bits:]) < 2.0**-bits

    def test_thermometer(self):
        code = ds.encode_coordinates(0.5, 0.0, 3, encoding="thermometer")
        assert code.tolist() == [1, 1, 0, 0, 0, 0]
        assert ds.encode_coordinates(0.99, 0.99, 5, "thermometer").sum() == 10

    def test_range(self):
        with pytest.raises(ValueError):
            ds.encode_coordinates(1.0, 0.0)
        with pytest.raises(ValueError):
            ds.encode_coordinates(0.0, 0.0, encoding="gray")


class TestIdx:
    def test_parse(self):
        arr = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
        np.testing.assert_array_equal(ds.parse_idx(idx_bytes(arr)), arr)

    def test_header(self):
        h = ds.parse_idx_header(idx_bytes(np.zeros((5, 2), np.uint8)))
        assert h.dims == (5, 2) and h.size == 12

    def test_bad_magic(self):
        data = bytearray(idx_bytes(np.zeros(3, np.uint8)))
        data[0] = 1
        with pytest.raises(ds.IdxMagicError):
            ds.parse_idx(bytes(data))
        data = bytearray(idx_bytes(np.zeros(3, np.uint8)))
        data[2] = 0x0D
        with pytest.raises(ds.IdxMagicError):
            ds.parse_idx(bytes(data))

    def test_truncated(self):
        data = idx_bytes(np.zeros((4, 4), np.uint8))
        with pytest.raises(ds.IdxTruncatedError):
            ds.parse_idx(data[:-1])
        with pytest.raises(ds.IdxTruncatedError):
            ds.parse_idx(data[:6])
        with pytest.raises(ds.IdxTruncatedError):
            ds.parse_idx(b"\x00")

    def test_dimension_errors(self):
        data = idx_bytes(np.zeros((4, 4), np.uint8))
        with pytest.raises(ds.IdxDimensionError):
            ds.parse_idx(data + b"\x00")
        with pytest.raises(ds.IdxDimensionError):
            ds.parse_idx(bytes([0, 0, 8, 0]))

    @settings(max_examples=300)
    @given(st.binary(max_size=64))
    def test_fuzz_never_crashes(self, data):
        try:
            out = ds.parse_idx(data)
        except ds.IdxError:
            return
        assert out.dtype == np.uint8

    @given(st.lists(st.integers(0, 4), min_size=1, max_size=3), st.data())
    def test_fuzz_valid(self, shape, data):
        n = int(np.prod(shape))
        payload = data.draw(st.binary(min_size=n, max_size=n))
        arr = np.frombuffer(payload, dtype=np.uint8).reshape(shape)
        np.testing.assert_array_equal(ds.parse_idx(idx_bytes(arr)), arr)

    def test_gzip(self, tmp_path):
        arr = np.arange(10, dtype=np.uint8)
        (tmp_path / "a.gz").write_bytes(gzip.compress(idx_bytes(arr)))
        np.testing.assert_array_equal(ds.read_idx(tmp_path / "a.gz"), arr)


class TestBinarize:
    def test_strict_threshold(self):
        x = np.array([[0.0, 0.5, 0.5001, 1.0]])
        assert ds.binarize(x, [0.5]).tolist() == [[0, 0, 1, 1]]

    def test_pixel_major(self):
        x = np.array([[0.3, 0.8]])
        assert ds.binarize(x, [0.25, 0.5, 0.75]).tolist() == [[1, 0, 0, 1, 1, 1]]

    def test_byte_pixels(self):
        # 128/255 > 0.5, 127/255 is not
        px = np.array([[127, 128]], dtype=np.float32) / np.float32(255)
        assert ds.binarize(px, [0.5]).tolist() == [[0, 1]]

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30))
    def test_thermometer_monotone(self, pixels):
        bits = ds.binarize(np.array([pixels]), [0.25, 0.5, 0.75]).reshape(-1, 3)
        # a set bit at threshold t implies every lower threshold is set too
        assert np.all(bits[:, 1:] <= bits[:, :-1])

    def test_all_black(self):
        assert not ds.binarize(np.zeros((2, 28, 28)), [0.25, 0.5, 0.75]).any()

    def test_invalid_thresholds(self):
        with pytest.raises(ValueError):
            ds.binarize(np.zeros((1, 2)), [])
        with pytest.raises(ValueError):
            ds.binarize(np.zeros((1, 2)), [0.5, 0.25])


class TestLoad:
    @pytest.mark.parametrize("compress", [False, True])
    def test_load(self, tmp_path, compress):
        images, labels = write_idx_set(tmp_path, 20, compress=compress)
        d = ds.load_idx_dataset("fashion-mnist", "train", tmp_path)
        assert d.inputs.shape == (20, 784 * 3)
        np.testing.assert_array_equal(d.labels, labels)
        expected = ds.binarize(images.astype(np.float32) / np.float32(255), [0.25, 0.5, 0.75])
        np.testing.assert_array_equal(d.inputs, expected)

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ds.load_idx_dataset("mnist", "test", tmp_path)

    def test_count_mismatch(self, tmp_path):
        write_idx_set(tmp_path, 5)
        (tmp_path / "t10k-labels-idx1-ubyte").write_bytes(idx_bytes(np.zeros(4, np.uint8)))
        with pytest.raises(ds.IdxDimensionError):
            ds.load_idx_dataset("mnist", "test", tmp_path)

    def test_env_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LGN_DATA_DIR", str(tmp_path))
        assert ds.data_dir() == tmp_path

    def test_bitdataset_validation(self):
        with pytest.raises(ValueError):
            ds.BitDataset(np.zeros((3, 2)), np.array([0, 1, 5]), 3)
        with pytest.raises(ValueError):
            ds.BitDataset(np.zeros((3, 2)), np.array([0, 1]), 3)


MNIST_DIR = ds.data_dir() / "mnist"
have_mnist = pytest.mark.skipif(
    not all((MNIST_DIR / n).exists() or (MNIST_DIR / (n + ".gz")).exists() for n in sum(ds.IDX_FILES.values(), ())),
    reason="MNIST IDX files not found (run `lgn fetch mnist` or set LGN_DATA_DIR)",
)


@have_mnist
class TestRealMnist:
    def test_dimensions(self):
        images = ds.read_idx(ds.find_idx(MNIST_DIR, "train-images-idx3-ubyte"))
        assert images.shape == (60000, 28, 28)
        assert ds.read_idx(ds.find_idx(MNIST_DIR, "t10k-labels-idx1-ubyte")).shape == (10000,)

    def test_bit_density(self):
        d = ds.load_idx_dataset("mnist", "train", MNIST_DIR)
        assert d.input_width == 784
        assert abs(d.inputs.mean() - 0.13) < 0.03
