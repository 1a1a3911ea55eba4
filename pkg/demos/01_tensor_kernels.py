"""Walk through the deterministic tensor kernels.

Every kernel accumulates in ascending index order, so results are
bit-reproducible run to run: the same script always prints the same bytes.
"""

import numpy as np

from chromapad import (
    BatchNormParams,
    avg_pool2d,
    batch_norm,
    conv2d,
    elementwise_add,
    matmul,
    relu,
    softmax_last_axis,
    tensor,
    upsample_nearest,
)

# matrix product: c[i, j] = sum_k a[i, k] * b[k, j], ascending k
a = tensor([[1, 2], [3, 4]])
b = tensor([[5, 6], [7, 8]])
print("matmul:\n", matmul(a, b))

# a 3x3 box kernel with zero padding counts its in-bounds neighbors
ones_map = np.ones((1, 3, 3), np.float32)
box = np.ones((1, 1, 3, 3), np.float32)
print("\n3x3 box filter over a 3x3 map of ones (padding 1):\n",
      conv2d(ones_map, box, padding=1)[0])

# depthwise convolution: groups == channels, each channel filtered alone
x = np.arange(2 * 4 * 4, dtype=np.float32).reshape(2, 4, 4)
dw = np.zeros((2, 1, 3, 3), np.float32)
dw[:, 0, 1, 1] = 1.0  # identity taps
print("\ndepthwise identity kernel preserves the map:",
      bool(np.array_equal(conv2d(x, dw, padding=1, groups=2), x)))

# inference-mode normalization with running statistics
p = BatchNormParams(gamma=[2.0], beta=[1.0], running_mean=[1.0],
                    running_var=[3.0], epsilon=1.0)
print("\nbatch_norm scalar case 2*(2-1)/sqrt(3+1)+1 =",
      float(batch_norm(np.array([[[2.0]]], np.float32), p)[0, 0, 0]))

print("\nrelu([-1, 0, 2.5]) =", relu(np.array([-1.0, 0.0, 2.5], np.float32)))

print("softmax([0, ln 3]) =",
      softmax_last_axis(np.array([0.0, np.log(3.0)], np.float32)))

print("elementwise_add([1,2], [3,4]) =",
      elementwise_add(tensor([1.0, 2.0]), tensor([3.0, 4.0])))

# pooling and nearest-neighbor upsampling invert each other on maps that
# are constant over each tile
tile_constant = upsample_nearest(tensor([[[1.0, 2.0], [3.0, 4.0]]]), 2)
roundtrip = upsample_nearest(avg_pool2d(tile_constant, 2), 2)
print("\npool -> upsample round trip bit-exact on tile-constant map:",
      roundtrip.tobytes() == tile_constant.tobytes())
print("avg_pool2d of [[1,2],[3,4]] with k=2:",
      float(avg_pool2d(tensor([[[1.0, 2.0], [3.0, 4.0]]]), 2)[0, 0, 0]))
