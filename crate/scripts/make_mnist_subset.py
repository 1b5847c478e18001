"""Build the MNIST subset used by the tests and the CLI.

Source: the 5000-sample MNIST extract bundled in the `mlxtend` wheel
(mlxtend/data/data/mnist_5k.csv.gz, 784 pixel columns + 1 label column).
The rows are shuffled with a fixed seed and split 4000/1000 into IDX files
with the standard headers (0x00000803 images, 0x00000801 labels).

usage: python3 scripts/make_mnist_subset.py path/to/mlxtend-*.whl fixtures/mnist
"""
import gzip
import os
import random
import struct
import sys
import zipfile


def write_idx(out_dir, prefix, rows):
    n = len(rows)
    with open(os.path.join(out_dir, f"{prefix}-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        for pixels, _ in rows:
            f.write(bytes(pixels))
    with open(os.path.join(out_dir, f"{prefix}-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(bytes(label for _, label in rows))


def main():
    wheel, out_dir = sys.argv[1], sys.argv[2]
    with zipfile.ZipFile(wheel) as z:
        text = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    rows = []
    for line in text.strip().splitlines():
        vals = [int(float(v)) for v in line.split(",")]
        rows.append((vals[:784], vals[784]))
    random.Random(20210501).shuffle(rows)
    os.makedirs(out_dir, exist_ok=True)
    write_idx(out_dir, "train", rows[:4000])
    write_idx(out_dir, "t10k", rows[4000:])


if __name__ == "__main__":
    main()
