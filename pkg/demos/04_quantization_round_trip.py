"""Dynamic 8-bit weight quantization, value by value.

Scale is (f_max - f_min) / 255 and the zero point is
round(-f_min / S) - 128; values quantize to round((f - f_min) / S) - 128
and reconstruct as (q + 128) * S + f_min. The round trip never misses by
more than half a scale step.
"""

import numpy as np

from chromapad import (
    build_model,
    compute_quant_params,
    dequantize,
    quantize,
    quantize_model,
    ModelConfig,
)

f = np.array([-1.0, -0.25, 0.0, 0.5, 1.0], np.float32)
params = compute_quant_params(f)
print(f"tensor {f.tolist()}")
print(f"f_min={params.f_min}, f_max={params.f_max}")
print(f"scale S = (f_max - f_min)/255 = {params.scale:.6f}")
print(f"zero point Z = round(-f_min/S) - 128 = {params.zero_point}")

qt = quantize(f, params)
print("\nint8 codes:", qt.qdata.tolist(), " (extremes hit -128 and 127)")

recon = dequantize(qt)
err = np.abs(recon - f.astype(np.float64))
print("reconstruction:", [f"{v:.5f}" for v in recon])
print(f"max error {err.max():.6f} <= S/2 = {params.scale / 2:.6f}")

# constant tensors are the degenerate case: S = 1 by definition and the
# round trip is exact
const = np.full(4, 2.5, np.float32)
cq = quantize(const, compute_quant_params(const))
print("\nconstant tensor codes:", cq.qdata.tolist(),
      "-> exact reconstruction:", dequantize(cq).tolist())

# model-wide quantization targets projection and pointwise weight matrices
# by default and reports byte savings per tensor
model = build_model(ModelConfig.desk(seed=3))
quantized, report = quantize_model(model.weights)
print(f"\nmodel bytes before: {report.total_bytes_before:,}")
print(f"model bytes after:  {report.total_bytes_after:,}")
quant_rows = [t for t in report.tensors if t.quantized]
print(f"quantized tensors: {len(quant_rows)} of {len(report.tensors)}")
worst = max(quant_rows, key=lambda t: t.max_abs_error)
print(f"worst per-tensor reconstruction error: {worst.max_abs_error:.6f} "
      f"({worst.name})")
