#!/usr/bin/env python3
# Copyright 2026 The gradleak Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Converts the 5000-image MNIST sample shipped with mlxtend into IDX files.

Usage: mnist_subset_to_idx.py MNIST_5K_CSV_GZ OUT_DIR

Writes train-{images,labels} (4000 samples) and t10k-{images,labels}
(1000 samples) after a fixed shuffle.
"""
import gzip
import pathlib
import struct
import sys

import numpy as np


def write_idx(path, array, magic):
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in array.shape:
            f.write(struct.pack(">I", d))
        f.write(array.astype(np.uint8).tobytes())


def main():
    src, out = sys.argv[1], pathlib.Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    table = np.genfromtxt(gzip.open(src), delimiter=",")
    images = table[:, :-1].reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)
    order = np.random.default_rng(20220101).permutation(len(labels))
    images, labels = images[order], labels[order]
    write_idx(out / "train-images-idx3-ubyte", images[:4000], 0x00000803)
    write_idx(out / "train-labels-idx1-ubyte", labels[:4000], 0x00000801)
    write_idx(out / "t10k-images-idx3-ubyte", images[4000:], 0x00000803)
    write_idx(out / "t10k-labels-idx1-ubyte", labels[4000:], 0x00000801)


if __name__ == "__main__":
    main()
