#!/usr/bin/env python3
"""Download the benchmark datasets into FF_DATA_DIR.

Usage:
    FF_DATA_DIR=~/ff-data python3 scripts/fetch_data.py mnist fashionmnist
    python3 scripts/fetch_data.py --data-dir ~/ff-data all

Needs network access. Files land exactly where the loaders look:
    <data-dir>/mnist/train-images-idx3-ubyte.gz           (IDX, gzip ok)
    <data-dir>/fashionmnist/train-images-idx3-ubyte.gz
    <data-dir>/cifar10/data_batch_1.bin ... test_batch.bin
    <data-dir>/stl10/train_X.bin train_y.bin test_X.bin test_y.bin
CIFAR-10 and STL-10 arrive as tarballs and are unpacked flat.
"""

import argparse
import os
import shutil
import sys
import tarfile
import tempfile
import urllib.request

MNIST_FILES = (
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
)

SOURCES = {
    "mnist": [
        ("https://storage.googleapis.com/cvdf-datasets/mnist/" + f, f)
        for f in MNIST_FILES
    ],
    "fashionmnist": [
        ("http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/" + f, f)
        for f in MNIST_FILES
    ],
    "cifar10": [
        ("https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz",
         "cifar-10-binary.tar.gz"),
    ],
    "stl10": [
        ("http://ai.stanford.edu/~acoates/stl10/stl10_binary.tar.gz",
         "stl10_binary.tar.gz"),
    ],
}


def fetch(url, dest):
    print(f"  {url}")
    with urllib.request.urlopen(url) as resp, open(dest, "wb") as fh:
        shutil.copyfileobj(resp, fh)


def unpack_flat(tarball, target_dir, wanted_suffixes):
    """Pull matching members out of the tarball, flattening paths."""
    with tarfile.open(tarball) as tf:
        for member in tf.getmembers():
            base = os.path.basename(member.name)
            if member.isfile() and base.endswith(wanted_suffixes):
                with tf.extractfile(member) as src:
                    with open(os.path.join(target_dir, base), "wb") as dst:
                        shutil.copyfileobj(src, dst)
                print(f"  unpacked {base}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("datasets", nargs="+",
                        help=f"names from {sorted(SOURCES)} or 'all'")
    parser.add_argument("--data-dir", default=os.environ.get("FF_DATA_DIR"))
    args = parser.parse_args()
    if not args.data_dir:
        sys.exit("set FF_DATA_DIR or pass --data-dir")
    names = sorted(SOURCES) if "all" in args.datasets else args.datasets
    for name in names:
        if name not in SOURCES:
            sys.exit(f"unknown dataset {name!r}; choose from {sorted(SOURCES)}")
        target = os.path.join(args.data_dir, name)
        os.makedirs(target, exist_ok=True)
        print(f"{name} -> {target}")
        for url, fname in SOURCES[name]:
            dest = os.path.join(target, fname)
            if fname.endswith(".tar.gz"):
                with tempfile.NamedTemporaryFile(suffix=".tar.gz") as tmp:
                    fetch(url, tmp.name)
                    unpack_flat(tmp.name, target, (".bin",))
            elif os.path.exists(dest):
                print(f"  {fname} already present")
            else:
                fetch(url, dest)
    print("done")


if __name__ == "__main__":
    main()
