#!/usr/bin/env python3
"""Generate the shared fixtures the frontend tests check against.

Dilation cases come straight from the library's disk-kernel dilation so the
client-side preview can be asserted equal to what the server would compute.
Run from the repo root:  python3 frontend/scripts/make_fixtures.py
"""

import json
from pathlib import Path

import numpy as np

from crosscompose import MaskPlane, dilate_mask
from crosscompose.core import ImagePlane
from crosscompose.imageio import save_image, save_mask

OUT = Path(__file__).parent.parent / "fixtures"


def bits_to_rows(bits: np.ndarray) -> list[str]:
    return ["".join("1" if v else "0" for v in row) for row in bits]


def dilation_cases():
    cases = []

    single = np.zeros((11, 11), dtype=bool)
    single[5, 5] = True
    for radius in (0, 1, 3):
        out = dilate_mask(MaskPlane(single, "fg_object"), radius)
        cases.append(
            {
                "name": f"single-pixel-r{radius}",
                "width": 11,
                "height": 11,
                "radius": radius,
                "input": bits_to_rows(single),
                "expected": bits_to_rows(out.bits),
            }
        )

    rng = np.random.default_rng(99)
    blob = rng.uniform(size=(24, 24)) < 0.12
    for radius in (2, 5):
        out = dilate_mask(MaskPlane(blob, "fg_object"), radius)
        cases.append(
            {
                "name": f"random-blob-r{radius}",
                "width": 24,
                "height": 24,
                "radius": radius,
                "input": bits_to_rows(blob),
                "expected": bits_to_rows(out.bits),
            }
        )

    rect = np.zeros((32, 32), dtype=bool)
    rect[10:20, 8:24] = True
    out = dilate_mask(MaskPlane(rect, "fg_object"), 15)
    cases.append(
        {
            "name": "rect-r15-default",
            "width": 32,
            "height": 32,
            "radius": 15,
            "input": bits_to_rows(rect),
            "expected": bits_to_rows(out.bits),
        }
    )
    return cases


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "dilation_cases.json").write_text(json.dumps(dilation_cases(), indent=1))

    rng = np.random.default_rng(7)
    save_image(ImagePlane(rng.uniform(size=(96, 96, 3))), OUT / "bg.png")
    save_image(ImagePlane(rng.uniform(size=(32, 32, 3))), OUT / "fg.png")
    bits = np.zeros((32, 32), dtype=bool)
    bits[8:24, 8:24] = True
    save_mask(MaskPlane(bits, "fg_object"), OUT / "fg_mask.png")
    print(f"wrote fixtures to {OUT}")


if __name__ == "__main__":
    main()
