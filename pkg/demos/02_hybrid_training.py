"""Hybrid training: analog pre-training, conversion, spike fine-tuning.

Trains a small convolutional net on the synthetic shape task, converts
it to a spiking network by percentile threshold balancing, and
fine-tunes with surrogate gradients. Prints accuracy after each phase
so the conversion drop and its recovery are visible.
"""

from snncompress.network import build_config, init_weights
from snncompress.pipeline.datasets import load_synthetic
from snncompress.simulate import evaluate
from snncompress.training.ann import AnnTrainConfig, ann_evaluate, train_ann
from snncompress.training.bptt import SnnTrainConfig, train_snn
from snncompress.training.convert import convert_to_snn

TIMESTEPS = 12
SEED = 0


def main():
    ds = load_synthetic(n_train=800, n_test=400, n_classes=3, size=12,
                        noise=0.2, seed=SEED)
    cfg = build_config(ds.input_shape, ds.n_classes, [
        {"kind": "conv", "out_channels": 8},
        {"kind": "avgpool"},
        {"kind": "dropout", "rate": 0.2},
        {"kind": "linear"},
    ])
    net = init_weights(cfg, seed=SEED)
    print(f"network: {net.n_params()} parameters, "
          f"{len(cfg.weighted_indices())} weighted layers")

    print("\n-- phase 1: analog training (SGD, momentum) --")
    hist = train_ann(net, ds.train_x, ds.train_y, ds.val_x, ds.val_y,
                     AnnTrainConfig(epochs=6, lr=0.05, seed=SEED))
    for row in hist:
        print(f"epoch {row['epoch']}  lr={row['lr']:.4f}  "
              f"val={row['val_acc']:.4f}")
    ann_acc = ann_evaluate(net, ds.test_x, ds.test_y)
    print(f"analog test accuracy: {ann_acc:.4f}")

    print("\n-- phase 2: threshold balancing --")
    snn, thresholds = convert_to_snn(net, ds.train_x[:200], TIMESTEPS,
                                     seed=SEED)
    print(f"percentile {thresholds.percentile}: "
          + ", ".join(f"{t:.3f}" for t in thresholds.values))
    conv_acc = evaluate(snn, ds.test_x, ds.test_y, TIMESTEPS, seed=SEED)
    print(f"converted SNN test accuracy at T={TIMESTEPS}: {conv_acc:.4f}")

    print("\n-- phase 3: surrogate-gradient fine-tuning --")
    hist = train_snn(snn, ds.train_x, ds.train_y, ds.val_x, ds.val_y,
                     TIMESTEPS, SnnTrainConfig(epochs=3, lr=1e-3, seed=SEED))
    for row in hist:
        print(f"epoch {row['epoch']}  lr={row['lr']:.5f}  "
              f"val={row['val_acc']:.4f}")
    snn_acc = evaluate(snn, ds.test_x, ds.test_y, TIMESTEPS, seed=SEED)
    print(f"fine-tuned SNN test accuracy: {snn_acc:.4f}")
    print(f"\nanalog {ann_acc:.4f} -> converted {conv_acc:.4f} "
          f"-> fine-tuned {snn_acc:.4f}")


if __name__ == "__main__":
    main()
