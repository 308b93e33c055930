#!/usr/bin/env python3
"""Write a 5000-image MNIST subset as an IDX file (u8, 5000 x 28 x 28).

The images come from mnist_5k.csv.gz shipped inside the mlxtend wheel
(784 pixel columns then a label column). The wheel is fetched with pip unless
--wheel points at a local copy.
"""

import argparse
import csv
import gzip
import io
import pathlib
import struct
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def find_wheel(explicit, workdir):
    if explicit:
        return pathlib.Path(explicit)
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary", ":all:",
         "mlxtend==0.24.0", "-d", str(workdir)],
        check=True,
    )
    return next(pathlib.Path(workdir).glob("mlxtend-*.whl"))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--wheel", help="local mlxtend wheel")
    ap.add_argument("--out", default="data/mnist5k-images-idx3-ubyte")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = find_wheel(args.wheel, tmp)
        with zipfile.ZipFile(wheel) as zf:
            raw = gzip.decompress(zf.read(MEMBER))

    rows = list(csv.reader(io.StringIO(raw.decode())))
    rows = [r for r in rows if r and r[0].strip().lstrip("-").replace(".", "").isdigit()]
    if len(rows) != 5000 or any(len(r) != 785 for r in rows):
        sys.exit(f"unexpected table shape: {len(rows)} rows")

    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for r in rows:
            f.write(bytes(int(float(v)) for v in r[:784]))
    print(f"wrote {out}: {len(rows)} images")


if __name__ == "__main__":
    main()
