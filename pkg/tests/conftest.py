import os
import struct
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))  # make oracles importable

from ffbench.data import Dataset
from ffbench.tensor import Rng


def make_block_blobs(n_per, num_classes=2, block=5, spread=0.1, seed=5, amp=1.0):
    """Separable synthetic classes: class c activates its own block of
    feature coordinates; label slots prepended and left at zero."""
    r = Rng(seed)
    feat = block * num_classes
    rows, labels = [], []
    for c in range(num_classes):
        base = np.zeros(feat)
        base[c * block:(c + 1) * block] = amp
        pts = base + spread * r.standard_normal((n_per, feat))
        out = np.zeros((n_per, num_classes + feat))
        out[:, num_classes:] = pts
        rows.append(out)
        labels.append(np.full(n_per, c))
    rows = np.concatenate(rows)
    labels = np.concatenate(labels)
    perm = r.permutation(rows.shape[0])
    return rows[perm], labels[perm]


@pytest.fixture(scope="session")
def blob_dataset():
    tr_x, tr_y = make_block_blobs(32, seed=5)
    te_x, te_y = make_block_blobs(16, seed=6)
    return Dataset("blobs", tr_x, tr_y, te_x, te_y, num_classes=2)


@pytest.fixture(scope="session")
def digits_dataset():
    """Real 8x8 grayscale digit images bundled with scikit-learn; the
    offline stand-in for a byte-format image dataset."""
    sklearn_datasets = pytest.importorskip("sklearn.datasets")
    X, y = sklearn_datasets.load_digits(return_X_y=True)
    X = X / 16.0
    return Dataset("digits", X[:1500], y[:1500], X[1500:], y[1500:], num_classes=10)


def write_idx_fixture(dirpath, train_images, train_labels, test_images, test_labels):
    """Write an IDX dataset with raw struct packing, independent of the
    package's writer."""
    os.makedirs(dirpath, exist_ok=True)

    def dump(images, labels, img_name, lab_name):
        n = images.shape[0]
        with open(os.path.join(dirpath, img_name), "wb") as fh:
            fh.write(struct.pack(">IIII", 0x803, n, 28, 28))
            fh.write(images.astype(np.uint8).tobytes())
        with open(os.path.join(dirpath, lab_name), "wb") as fh:
            fh.write(struct.pack(">II", 0x801, n))
            fh.write(labels.astype(np.uint8).tobytes())

    dump(train_images, train_labels, "train-images-idx3-ubyte", "train-labels-idx1-ubyte")
    dump(test_images, test_labels, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


def synth_mnist_like(n, seed=42):
    """28x28 uint8 images where class c is a bright horizontal bar at a
    class-specific height; learnable and loader-compatible."""
    r = Rng(seed)
    labels = r.integers(0, 10, size=n)
    imgs = (12.0 + 12.0 * r.uniform(0.0, 1.0, (n, 784)))
    for i, c in enumerate(labels):
        img = imgs[i].reshape(28, 28)
        img[2 + 2 * int(c): 4 + 2 * int(c), 4:24] = 242.0
    return np.clip(np.round(imgs), 0, 255), labels


@pytest.fixture(scope="session")
def mnist_fixture_dir(tmp_path_factory):
    """FF_DATA_DIR layout holding a small synthetic dataset under the
    mnist filenames, for exercising the CLI and loaders offline."""
    root = tmp_path_factory.mktemp("ffdata")
    tr_x, tr_y = synth_mnist_like(600, seed=42)
    te_x, te_y = synth_mnist_like(200, seed=43)
    write_idx_fixture(str(root / "mnist"), tr_x, tr_y, te_x, te_y)
    return str(root)


def real_mnist_available():
    """True when FF_DATA_DIR points at actual MNIST files."""
    root = os.environ.get("FF_DATA_DIR")
    if not root:
        return False
    path = os.path.join(root, "mnist")
    needed = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
              "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    return all(
        os.path.exists(os.path.join(path, f))
        or os.path.exists(os.path.join(path, f + ".gz"))
        for f in needed
    )
