#!/usr/bin/env python3
"""Writes tests/data/interp_oracle.bin from torch.nn.functional.interpolate.

Record layout (little-endian): u32 in_h, in_w, out_h, out_w, flags; then
in_h*in_w f32 input and out_h*out_w f32 expected output, row-major.
flags bit 0: antialias, bit 1: nearest (legacy) instead of bilinear.

Inputs are rounded to f32 before the reference runs, so the expected values
describe exactly the stored input. Antialiased cases keep both input extents
>= 2: torch's antialias kernel mishandles single-row/column inputs.
"""

import argparse
import pathlib
import struct

import torch
import torch.nn.functional as F

ANTIALIAS = 1
NEAREST = 2


def reference(x, out_h, out_w, flags):
    t = x.to(torch.float64)[None, None]
    if flags & NEAREST:
        y = F.interpolate(t, size=(out_h, out_w), mode="nearest")
    else:
        y = F.interpolate(t, size=(out_h, out_w), mode="bilinear", align_corners=False,
                          antialias=bool(flags & ANTIALIAS))
    return y[0, 0]


def cases(gen):
    # Hand-picked extents covering identity, pure up/down, mixed axes and
    # the long-side resizes used by the pipeline.
    fixed = [
        (1, 2, 1, 4, 0), (4, 4, 4, 4, 0), (4, 4, 4, 4, ANTIALIAS),
        (8, 8, 3, 3, ANTIALIAS), (8, 8, 3, 3, 0), (5, 7, 11, 13, 0),
        (5, 7, 11, 13, ANTIALIAS), (12, 9, 4, 17, ANTIALIAS), (16, 16, 96, 96, 0),
        (96, 96, 24, 24, ANTIALIAS), (48, 64, 36, 48, ANTIALIAS), (7, 5, 2, 2, ANTIALIAS),
        (1, 4, 1, 2, NEAREST), (6, 6, 4, 9, NEAREST), (10, 3, 7, 3, NEAREST),
    ]
    yield from fixed
    for _ in range(60):
        flags = int(torch.randint(0, 3, (1,), generator=gen))
        lo = 2 if flags == ANTIALIAS else 1
        in_h, in_w = (int(v) for v in torch.randint(lo, 20, (2,), generator=gen))
        out_h, out_w = (int(v) for v in torch.randint(1, 28, (2,), generator=gen))
        yield in_h, in_w, out_h, out_w, flags


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    default = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data" / "interp_oracle.bin"
    parser.add_argument("--out", type=pathlib.Path, default=default)
    parser.add_argument("--seed", type=int, default=20240611)
    args = parser.parse_args()

    gen = torch.Generator().manual_seed(args.seed)
    blob = bytearray()
    count = 0
    for in_h, in_w, out_h, out_w, flags in cases(gen):
        x = (torch.rand(in_h, in_w, generator=gen, dtype=torch.float64) * 4 - 2).to(torch.float32)
        y = reference(x, out_h, out_w, flags).to(torch.float32)
        blob += struct.pack("<5I", in_h, in_w, out_h, out_w, flags)
        blob += struct.pack(f"<{x.numel()}f", *x.flatten().tolist())
        blob += struct.pack(f"<{y.numel()}f", *y.flatten().tolist())
        count += 1
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_bytes(bytes(blob))
    print(f"wrote {count} records ({len(blob)} bytes) to {args.out}")


if __name__ == "__main__":
    main()
