"""
Training with a quantized hidden layer
======================================

A 2-16-2 network on two Gaussian blobs, trained with the straight-through
estimator. The first layer runs on binary operands at order 1 or order 2.
"""

from horq.train import TrainConfig, train_loop

for order in (1, 2):
    cfg = TrainConfig(arch=(2, 16, 2), quantize=(0,), order=order, epochs=30, seed=3)
    result = train_loop(cfg)
    print(f"order {order}")
    for m in result.trace[::10]:
        print(f"  epoch {m.epoch:2d}  hinge {m.train_loss:.4f}  train acc {m.train_acc:.3f}"
              f"  test acc {m.test_acc:.3f}  input residual {m.rel_residual[0]:.2e}")

# with two input features, two residual terms reproduce each input exactly,
# so order 2 trains like the float network while order 1 sees only a sign and a scale
