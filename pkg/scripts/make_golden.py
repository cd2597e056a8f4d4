"""Record golden bitstreams for the cross-platform decode check.

    python scripts/make_golden.py --model runs/fixture_l1.8.ccaw --heldout data/test

Copies the model and held-out images into tests/fixtures, encodes a few of
them (plus odd-sized crops) and writes ``golden.json`` with SHA-256 digests
of every bitstream, decoded image and latent.  Run once; the fixtures are
then checked in and must decode to the same digests everywhere.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys

import numpy as np

from ccacodec.checkpoint import load_checkpoint, model_checksum
from ccacodec.codec import serialize_container
from ccacodec.imageio import list_images, read_ppm, write_ppm
from ccacodec.pipeline import compress, decompress

OUT = os.path.join(os.path.dirname(__file__), os.pardir, "tests", "fixtures")


def sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def latent_digest(y_hat) -> str:
    return sha(b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in y_hat))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", required=True)
    ap.add_argument("--heldout", default="data/test")
    ap.add_argument("--out", default=OUT)
    args = ap.parse_args(argv)

    out = os.path.normpath(args.out)
    held = os.path.join(out, "heldout")
    golden = os.path.join(out, "golden")
    os.makedirs(held, exist_ok=True)
    os.makedirs(golden, exist_ok=True)
    shutil.copyfile(args.model, os.path.join(out, "model.ccaw"))
    paths = list_images(args.heldout)
    for p in paths:
        shutil.copyfile(p, os.path.join(held, os.path.basename(p)))

    model = load_checkpoint(args.model)
    checksum = model_checksum(model)
    cases = {}
    for p in paths[:4]:
        cases[os.path.splitext(os.path.basename(p))[0]] = read_ppm(p)
    first = read_ppm(paths[0])
    cases["crop_37x50"] = np.ascontiguousarray(first[5:42, 3:53])
    cases["crop_1x1"] = np.ascontiguousarray(first[:1, :1])

    record = {"model_checksum": f"{checksum:016x}", "cases": {}}
    for name, img in cases.items():
        container, enc = compress(model, img, checksum=checksum)
        blob = serialize_container(container)
        decoded, dec = decompress(model, blob, checksum=checksum)
        src = os.path.join(golden, f"{name}.ppm")
        write_ppm(src, img)
        with open(os.path.join(golden, f"{name}.cca"), "wb") as f:
            f.write(blob)
        record["cases"][name] = {
            "bitstream": sha(blob),
            "decoded": sha(decoded.tobytes()),
            "y_hat": latent_digest(dec.y_hat),
            "shape": list(img.shape),
        }
        print(f"{name}: {len(blob)} bytes")
    with open(os.path.join(golden, "golden.json"), "w", encoding="utf-8") as f:
        json.dump(record, f, indent=1, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
