"""Decode a PPM and convert it into the three branch color spaces."""

import numpy as np

from chromapad import (
    ColorImage,
    ColorSpace,
    image_to_tensor,
    load_ppm,
    rgb_to_hsv,
    rgb_to_ycbcr,
    to_ppm_bytes,
)

# build a tiny image: red, green, blue, gray
pixels = np.array(
    [[(255, 0, 0), (0, 255, 0)],
     [(0, 0, 255), (128, 128, 128)]], np.uint8)
img = ColorImage(width=2, height=2, space=ColorSpace.RGB, pixels=pixels)

# binary PPM (P6, maxval 255) is the interchange format
data = to_ppm_bytes(img)
print("PPM header:", data[:11])
decoded = load_ppm(data)
print("byte-exact decode:", bool(np.array_equal(decoded.pixels, pixels)))

hsv = rgb_to_hsv(decoded)
print("\nHSV (hue maps 0..360 degrees onto 0..255):")
for row in range(2):
    for col in range(2):
        print(f"  rgb {tuple(int(v) for v in pixels[row, col])} -> "
              f"hsv {tuple(int(v) for v in hsv.pixels[row, col])}")

ycc = rgb_to_ycbcr(decoded)
print("\nfull-range BT.601 YCbCr (gray lands on Cb = Cr = 128):")
for row in range(2):
    for col in range(2):
        print(f"  rgb {tuple(int(v) for v in pixels[row, col])} -> "
              f"ycbcr {tuple(int(v) for v in ycc.pixels[row, col])}")

# branch input tensors scale bytes to [0, 1], channel-major
t = image_to_tensor(hsv)
print("\nbranch tensor shape:", t.shape, " value range:",
      float(t.min()), "..", float(t.max()))
