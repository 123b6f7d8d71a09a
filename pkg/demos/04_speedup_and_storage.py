"""
What the analytical model predicts
==================================

The speedup of a binary layer over its float counterpart depends on how much
work the bit operations replace and how many float scale operations remain.
"""

from horq.perf import SpeedupQuery, standard_sweeps, speedup_ratio, storage_model

q = SpeedupQuery(c_in=64, c_out=256, w=3, h=3, K=2)
print("64 -> 256 channels, 3x3, order 2:", round(speedup_ratio(q), 2))

for name, rows in standard_sweeps().items():
    print(f"\n{name}")
    for value, eta in rows:
        print(f"  {value:>4}  {eta:7.2f}  " + "#" * int(eta))

# storage: one bit per weight plus one float scale per filter row
layers = [(64, 27), (128, 576), (256, 1152), (512, 4608), (4096, 25088), (1000, 4096)]
report = storage_model(layers, [True] * len(layers))
print(f"\nstorage {report.float_bytes:,} -> {report.binary_bytes:,} bytes, {report.ratio:.2f}x smaller")
