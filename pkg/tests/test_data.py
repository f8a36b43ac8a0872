"""Dataset IO: byte-exact round-trips for all three binary formats,
corruption diagnostics, and the label-embedding transforms."""

import gzip
import os
import struct

import numpy as np
import pytest

from ffbench.data import (
    CIFAR_RECORD_BYTES,
    DATASET_NAMES,
    IDX_IMAGE_MAGIC,
    IDX_LABEL_MAGIC,
    STL_IMAGE_BYTES,
    NormalizationSpec,
    embed_label,
    embed_neutral,
    load_cifar10,
    load_dataset,
    load_idx,
    load_stl10,
    make_negative,
    write_cifar10_batch,
    write_idx,
    write_stl10,
)
from ffbench.errors import (
    BadMagicError,
    CountMismatchError,
    DataFormatError,
    LabelRangeError,
    TruncatedFileError,
)
from ffbench.tensor import Rng


def uint8_images(n, dim, seed):
    # values on the exact 1/255 grid so write -> load is lossless
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(n, dim)).astype(np.float64) / 255.0


class TestIdxRoundTrip:
    def test_write_then_load_bit_exact(self, tmp_path):
        images = uint8_images(12, 784, 0)
        labels = np.arange(12) % 10
        ip, lp = str(tmp_path / "imgs"), str(tmp_path / "labs")
        write_idx(ip, lp, images, labels)
        got_images, got_labels = load_idx(ip, lp)
        assert got_images.dtype == np.float64
        assert (got_images == images).all()
        assert (got_labels == labels).all()

    def test_header_bytes_match_raw_struct(self, tmp_path):
        # independent check of the on-disk layout, not via the loader
        images = uint8_images(3, 784, 1)
        ip, lp = str(tmp_path / "imgs"), str(tmp_path / "labs")
        write_idx(ip, lp, images, [7, 8, 9])
        raw = open(ip, "rb").read()
        assert struct.unpack(">IIII", raw[:16]) == (IDX_IMAGE_MAGIC, 3, 28, 28)
        assert len(raw) == 16 + 3 * 784
        raw_labels = open(lp, "rb").read()
        assert struct.unpack(">II", raw_labels[:8]) == (IDX_LABEL_MAGIC, 3)
        assert raw_labels[8:] == bytes([7, 8, 9])

    def test_loads_raw_struct_fixture(self, tmp_path):
        # the conftest helper packs headers with struct.pack, independent
        # of write_idx, so this cross-checks the on-disk layout
        from conftest import write_idx_fixture

        raw = (uint8_images(5, 784, 2) * 255.0).round()
        labels = np.array([0, 1, 2, 3, 4])
        write_idx_fixture(str(tmp_path), raw, labels, raw[:2], labels[:2])
        got_images, got_labels = load_idx(
            str(tmp_path / "train-images-idx3-ubyte"),
            str(tmp_path / "train-labels-idx1-ubyte"),
        )
        assert (got_images == raw / 255.0).all()
        assert (got_labels == labels).all()

    def test_gzip_variant(self, tmp_path):
        images = uint8_images(4, 784, 3)
        labels = [1, 2, 3, 4]
        ip, lp = str(tmp_path / "imgs"), str(tmp_path / "labs")
        write_idx(ip, lp, images, labels)
        for path in (ip, lp):
            with open(path, "rb") as fh:
                data = fh.read()
            with gzip.open(path + ".gz", "wb") as fh:
                fh.write(data)
            os.remove(path)
        got_images, got_labels = load_idx(ip + ".gz", lp + ".gz")
        assert (got_images == images).all()
        assert (got_labels == np.asarray(labels)).all()

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(struct.pack(">IIII", 0x00000802, 1, 28, 28) + b"\0" * 784)
        with pytest.raises(BadMagicError, match="unexpected magic 0x00000802"):
            load_idx(str(path), str(path))

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short"
        path.write_bytes(struct.pack(">I", IDX_IMAGE_MAGIC) + b"\0\0")
        with pytest.raises(TruncatedFileError):
            load_idx(str(path), str(path))

    def test_truncated_payload(self, tmp_path):
        ip, lp = str(tmp_path / "imgs"), str(tmp_path / "labs")
        write_idx(ip, lp, uint8_images(2, 784, 4), [0, 1])
        whole = open(ip, "rb").read()
        open(ip, "wb").write(whole[:-5])
        with pytest.raises(TruncatedFileError, match="payload"):
            load_idx(ip, lp)

    def test_count_mismatch(self, tmp_path):
        ip, lp = str(tmp_path / "imgs"), str(tmp_path / "labs")
        ip2, lp2 = str(tmp_path / "imgs2"), str(tmp_path / "labs2")
        write_idx(ip, lp, uint8_images(3, 784, 5), [0, 1, 2])
        write_idx(ip2, lp2, uint8_images(4, 784, 6), [0, 1, 2, 3])
        with pytest.raises(CountMismatchError, match="3 images.*4 labels"):
            load_idx(ip, lp2)


class TestCifarRoundTrip:
    def test_write_then_load_bit_exact(self, tmp_path):
        images = uint8_images(10, 3072, 7)
        labels = np.arange(10) % 10
        path = str(tmp_path / "data_batch_1.bin")
        write_cifar10_batch(path, images, labels)
        got_images, got_labels = load_cifar10([path])
        assert (got_images == images).all()
        assert (got_labels == labels).all()

    def test_record_layout_matches_raw_bytes(self, tmp_path):
        images = uint8_images(2, 3072, 8)
        path = str(tmp_path / "b.bin")
        write_cifar10_batch(path, images, [3, 9])
        raw = open(path, "rb").read()
        assert len(raw) == 2 * CIFAR_RECORD_BYTES
        assert raw[0] == 3 and raw[CIFAR_RECORD_BYTES] == 9
        expected = np.round(images[0] * 255.0).astype(np.uint8).tobytes()
        assert raw[1:CIFAR_RECORD_BYTES] == expected

    def test_multiple_batches_concatenate_in_order(self, tmp_path):
        a = uint8_images(3, 3072, 9)
        b = uint8_images(2, 3072, 10)
        pa, pb = str(tmp_path / "a.bin"), str(tmp_path / "b.bin")
        write_cifar10_batch(pa, a, [0, 1, 2])
        write_cifar10_batch(pb, b, [3, 4])
        images, labels = load_cifar10([pa, pb])
        assert images.shape == (5, 3072)
        assert (labels == [0, 1, 2, 3, 4]).all()
        assert (images[:3] == a).all() and (images[3:] == b).all()

    def test_ragged_length_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"\0" * (CIFAR_RECORD_BYTES + 17))
        with pytest.raises(DataFormatError, match="multiple"):
            load_cifar10([str(path)])

    def test_label_out_of_range(self, tmp_path):
        record = bytes([11]) + b"\0" * 3072
        path = tmp_path / "bad.bin"
        path.write_bytes(record)
        with pytest.raises(LabelRangeError):
            load_cifar10([str(path)])


class TestStlRoundTrip:
    def test_write_then_load_converts_label_base(self, tmp_path):
        images = uint8_images(4, STL_IMAGE_BYTES, 11)
        labels = np.array([0, 5, 9, 2])
        ip, lp = str(tmp_path / "train_X.bin"), str(tmp_path / "train_y.bin")
        write_stl10(ip, lp, images, labels)
        # on disk the labels are 1-indexed; the loader shifts them back
        assert open(lp, "rb").read() == bytes([1, 6, 10, 3])
        got_images, got_labels = load_stl10(ip, lp)
        assert (got_images == images).all()
        assert (got_labels == labels).all()

    def test_zero_label_byte_rejected(self, tmp_path):
        ip, lp = tmp_path / "X.bin", tmp_path / "y.bin"
        ip.write_bytes(b"\0" * STL_IMAGE_BYTES)
        lp.write_bytes(bytes([0]))
        with pytest.raises(LabelRangeError, match="1-indexed"):
            load_stl10(str(ip), str(lp))

    def test_count_mismatch(self, tmp_path):
        ip, lp = tmp_path / "X.bin", tmp_path / "y.bin"
        ip.write_bytes(b"\0" * (2 * STL_IMAGE_BYTES))
        lp.write_bytes(bytes([1, 2, 3]))
        with pytest.raises(CountMismatchError):
            load_stl10(str(ip), str(lp))

    def test_ragged_image_file_rejected(self, tmp_path):
        ip, lp = tmp_path / "X.bin", tmp_path / "y.bin"
        ip.write_bytes(b"\0" * (STL_IMAGE_BYTES - 1))
        lp.write_bytes(bytes([1]))
        with pytest.raises(DataFormatError, match="multiple"):
            load_stl10(str(ip), str(lp))


class TestLoadDataset:
    def test_unknown_name(self):
        with pytest.raises(DataFormatError, match="unknown dataset"):
            load_dataset("imagenet", data_dir="/nonexistent")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DataFormatError, match="does not exist"):
            load_dataset("mnist", data_dir=str(tmp_path))

    def test_missing_file_named_in_error(self, tmp_path):
        (tmp_path / "mnist").mkdir()
        with pytest.raises(DataFormatError, match="train-images-idx3-ubyte"):
            load_dataset("mnist", data_dir=str(tmp_path))

    def test_no_data_dir_anywhere(self, monkeypatch):
        monkeypatch.delenv("FF_DATA_DIR", raising=False)
        with pytest.raises(DataFormatError, match="FF_DATA_DIR"):
            load_dataset("mnist")

    def test_loads_fixture_tree(self, mnist_fixture_dir):
        ds = load_dataset("mnist", data_dir=mnist_fixture_dir)
        assert ds.name == "mnist"
        assert ds.train_images.shape == (600, 784)
        assert ds.test_images.shape == (200, 784)
        assert ds.num_classes == 10
        assert ds.dim == 784
        assert ds.train_images.min() >= 0.0 and ds.train_images.max() <= 1.0
        assert ds.train_labels.min() >= 0 and ds.train_labels.max() <= 9

    def test_dataset_names_frozen(self):
        assert DATASET_NAMES == ("mnist", "fashionmnist", "cifar10", "stl10")


class TestEmbedding:
    def test_batch_one_hot_slots(self):
        rows = np.full((4, 20), 0.5)
        out = embed_label(rows, [0, 3, 9, 9], 10)
        assert out.shape == (4, 20)
        for i, lab in enumerate([0, 3, 9, 9]):
            expected = np.zeros(10)
            expected[lab] = 1.0
            assert (out[i, :10] == expected).all()
        assert (out[:, 10:] == 0.5).all()
        assert (rows == 0.5).all()  # input untouched

    def test_single_row_scalar_label(self):
        out = embed_label(np.full(15, 0.25), 4, 10)
        assert out.shape == (1, 15)
        assert out[0, 4] == 1.0
        assert out[0, :10].sum() == 1.0

    def test_label_out_of_range(self):
        rows = np.zeros((2, 12))
        with pytest.raises(LabelRangeError):
            embed_label(rows, [0, 10], 10)
        with pytest.raises(LabelRangeError):
            embed_label(rows, [-1, 0], 10)

    def test_row_too_narrow(self):
        with pytest.raises(ValueError, match="smaller than"):
            embed_label(np.zeros((1, 5)), 0, 10)

    def test_neutral_slots(self):
        out = embed_neutral(np.full((3, 14), 0.7), 10)
        assert (out[:, :10] == 0.1).all()
        assert (out[:, 10:] == 0.7).all()


class TestMakeNegative:
    def test_never_the_true_label(self):
        rng = Rng(0).child("neg")
        rows = np.zeros((100_000, 10))
        true = np.asarray(Rng(1).integers(0, 10, size=100_000))
        _, wrong = make_negative(rows, true, 10, rng)
        assert (wrong != true).all()
        assert wrong.min() >= 0 and wrong.max() <= 9

    def test_wrong_labels_uniform_over_others(self):
        # each of the 9 wrong classes should appear ~1/9 of the time
        rng = Rng(2).child("neg")
        n = 100_000
        rows = np.zeros((n, 10))
        _, wrong = make_negative(rows, np.full(n, 4), 10, rng)
        freq = np.bincount(wrong, minlength=10) / n
        assert freq[4] == 0.0
        others = np.delete(freq, 4)
        assert np.abs(others - 1.0 / 9.0).max() < 0.01

    def test_embeds_the_wrong_label(self):
        rng = Rng(3).child("neg")
        rows = np.full((8, 16), 0.3)
        out, wrong = make_negative(rows, np.zeros(8, dtype=int), 10, rng)
        assert (out[np.arange(8), wrong] == 1.0).all()
        assert out[:, :10].sum() == 8.0

    def test_needs_two_classes(self):
        with pytest.raises(ValueError, match="at least 2"):
            make_negative(np.zeros((1, 4)), 0, 1, Rng(0))


class TestNormalizationSpec:
    def test_fit_apply_standardizes(self):
        images = np.random.default_rng(0).normal(3.0, 2.0, size=(500, 6))
        spec = NormalizationSpec.fit(images)
        out = spec.apply(images)
        assert np.abs(out.mean(axis=0)).max() < 1e-12
        assert np.abs(out.std(axis=0) - 1.0).max() < 1e-12

    def test_zero_std_floored_not_rejected(self):
        images = np.ones((10, 3))
        spec = NormalizationSpec.fit(images)
        assert (spec.per_channel_std > 0).all()

    def test_direct_construction_validates(self):
        with pytest.raises(ValueError, match="std"):
            NormalizationSpec(np.zeros(3), np.array([1.0, 0.0, 1.0]))
