"""Spatial pruning: dimension analysis, depth reduction, retraining.

Measures how many principal components each layer's activations
actually use, rebuilds the network with the surplus removed, and
retrains the slimmer model through the same hybrid schedule. The
parameter table before and after is the point of the exercise.
"""

from snncompress.network import build_config, init_weights
from snncompress.pipeline.datasets import load_synthetic
from snncompress.simulate import evaluate
from snncompress.spatial import collect_activations, prune_spatial, significant_dims
from snncompress.training.ann import AnnTrainConfig, train_ann
from snncompress.training.bptt import SnnTrainConfig, train_snn
from snncompress.training.convert import convert_to_snn

TIMESTEPS = 12
SEED = 1


def hybrid(net, ds, ann_epochs=6, snn_epochs=2):
    train_ann(net, ds.train_x, ds.train_y, ds.val_x, ds.val_y,
              AnnTrainConfig(epochs=ann_epochs, lr=0.05, seed=SEED))
    snn, _ = convert_to_snn(net, ds.train_x[:200], TIMESTEPS, seed=SEED)
    train_snn(snn, ds.train_x, ds.train_y, ds.val_x, ds.val_y, TIMESTEPS,
              SnnTrainConfig(epochs=snn_epochs, lr=1e-3, seed=SEED))
    return snn


def main():
    ds = load_synthetic(n_train=800, n_test=400, n_classes=3, size=12,
                        noise=0.2, seed=SEED)
    cfg = build_config(ds.input_shape, ds.n_classes, [
        {"kind": "conv", "out_channels": 12},
        {"kind": "avgpool"},
        {"kind": "conv", "out_channels": 16},
        {"kind": "linear", "out_features": 24},
        {"kind": "linear"},
    ])
    snn = hybrid(init_weights(cfg, seed=SEED), ds)
    base_acc = evaluate(snn, ds.test_x, ds.test_y, TIMESTEPS, seed=SEED)
    print(f"dense model: {snn.n_params()} params, test acc {base_acc:.4f}\n")

    # How concentrated is the activation variance? The pruning pass
    # keeps enough principal components for 99.9%; looser targets show
    # how quickly the spectrum falls off.
    acts = collect_activations(snn, ds.train_x[:200], TIMESTEPS, seed=SEED)
    print("cumulative-variance dimensions per conv layer")
    print("layer  width   99.9%    99%    90%")
    for idx, mat in sorted(acts.items()):
        dims = [significant_dims(mat, threshold=t) for t in (0.999, 0.99, 0.9)]
        print(f"{idx:5d}  {mat.shape[1]:5d}  {dims[0]:5d}  {dims[1]:5d}  "
              f"{dims[2]:5d}")
    print()

    pruned_cfg, report = prune_spatial(snn, ds.train_x, TIMESTEPS,
                                       seed=SEED, max_samples=200)
    print("layer  width  significant  kept")
    for row in report.rows:
        print(f"{row[0]:5d}  {row[1]:5d}  {row[2]:11d}  {row[3]:4d}")
    if report.removed_layers:
        print(f"layers removed outright: {list(report.removed_layers)}")
    print(f"params {report.parent_params} -> {report.pruned_params} "
          f"({report.param_ratio:.2f}x)\n")

    print("retraining the pruned architecture from scratch...")
    pruned = hybrid(init_weights(pruned_cfg, seed=SEED), ds)
    pruned_acc = evaluate(pruned, ds.test_x, ds.test_y, TIMESTEPS, seed=SEED)
    print(f"pruned model: {pruned.n_params()} params, "
          f"test acc {pruned_acc:.4f}")
    print(f"accuracy change: {pruned_acc - base_acc:+.4f}")


if __name__ == "__main__":
    main()
