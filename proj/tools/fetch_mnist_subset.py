#!/usr/bin/env python3
# Copyright 2026 The Recalprune Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Builds a 10k-image MNIST subset in IDX format.

The digits come from the `mnist` npm package (10,000 MNIST samples stored as
JSON, pixels in [0,1] with three decimals). They are requantized to bytes,
shuffled with a fixed seed and split 8000/2000 into train/test IDX files.
"""

import argparse
import json
import os
import random
import struct
import subprocess
import sys
import tarfile
import tempfile

PACKAGE = "mnist@1.1.0"
FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
         "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("out_dir")
    parser.add_argument("--train", type=int, default=8000)
    parser.add_argument("--seed", type=int, default=20200720)
    args = parser.parse_args()

    if all(os.path.exists(os.path.join(args.out_dir, f)) for f in FILES):
        print("mnist subset already present in", args.out_dir)
        return 0
    os.makedirs(args.out_dir, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", PACKAGE, "--silent"], cwd=tmp,
                       check=True, stdout=subprocess.DEVNULL)
        tarball = [n for n in os.listdir(tmp) if n.endswith(".tgz")][0]
        samples = []
        with tarfile.open(os.path.join(tmp, tarball)) as tar:
            for digit in range(10):
                member = tar.extractfile(f"package/src/digits/{digit}.json")
                doc = json.load(member)
                pixels = doc["data"]
                if len(pixels) % 784 != 0:
                    raise SystemExit(f"digit {digit}: ragged pixel array")
                for i in range(0, len(pixels), 784):
                    img = [min(255, max(0, round(v * 255)))
                           for v in pixels[i:i + 784]]
                    samples.append((img, digit))

    random.Random(args.seed).shuffle(samples)
    train, test = samples[:args.train], samples[args.train:]
    out = args.out_dir
    write_images(os.path.join(out, FILES[0]), [s[0] for s in train])
    write_labels(os.path.join(out, FILES[1]), [s[1] for s in train])
    write_images(os.path.join(out, FILES[2]), [s[0] for s in test])
    write_labels(os.path.join(out, FILES[3]), [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test images to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
