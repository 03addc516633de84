"""Temporal pruning: walking the latency down while accuracy holds.

Starts from a fine-tuned spiking model at T=16 and repeatedly cuts two
timesteps, retraining one epoch per cut with a shared optimizer. The
descent stops when validation accuracy would fall below the floor
(starting accuracy minus three points). Prints the latency curve with
the average cumulative spike count per inference.
"""

from snncompress.network import build_config, init_weights
from snncompress.pipeline.datasets import load_synthetic
from snncompress.simulate import evaluate
from snncompress.temporal import TemporalPruneConfig, temporal_prune
from snncompress.training.ann import AnnTrainConfig, train_ann
from snncompress.training.bptt import SnnTrainConfig, train_snn
from snncompress.training.convert import convert_to_snn

T_START = 16
SEED = 2


def main():
    ds = load_synthetic(n_train=800, n_test=400, n_classes=3, size=12,
                        noise=0.2, seed=SEED)
    net = init_weights(build_config(ds.input_shape, ds.n_classes, [
        {"kind": "conv", "out_channels": 8},
        {"kind": "avgpool"},
        {"kind": "dropout", "rate": 0.2},
        {"kind": "linear"},
    ]), seed=SEED)
    train_ann(net, ds.train_x, ds.train_y, ds.val_x, ds.val_y,
              AnnTrainConfig(epochs=6, lr=0.05, seed=SEED))
    snn, _ = convert_to_snn(net, ds.train_x[:200], T_START, seed=SEED)
    train_cfg = SnnTrainConfig(epochs=2, lr=1e-3, seed=SEED)
    train_snn(snn, ds.train_x, ds.train_y, ds.val_x, ds.val_y, T_START,
              train_cfg)

    base = evaluate(snn, ds.val_x, ds.val_y, T_START, seed=SEED)
    floor = base - 0.03
    print(f"start: T={T_START}, val acc {base:.4f}, floor {floor:.4f}\n")

    result = temporal_prune(
        snn, ds.train_x, ds.train_y, ds.val_x, ds.val_y,
        TemporalPruneConfig(t_start=T_START, a_min=floor, v=2, e=1),
        train_cfg)

    print("T_r   val_acc   spikes/inference")
    print(f"{T_START:3d}   {result.start_acc:.4f}    {result.start_asci:8.1f}")
    for t_r, acc, spikes in result.curve.entries:
        mark = "  <- kept" if t_r == result.final_t else ""
        print(f"{t_r:3d}   {acc:.4f}    {spikes:8.1f}{mark}")

    test_acc = evaluate(result.network, ds.test_x, ds.test_y,
                        result.final_t, seed=SEED)
    print(f"\nfinal model: T={result.final_t} ({result.status}), "
          f"test acc {test_acc:.4f}")
    print(f"latency cut {T_START}->{result.final_t}, spike budget "
          f"{result.start_asci:.0f}->"
          f"{dict((t, s) for t, _, s in result.curve.entries)[result.final_t]:.0f}")


if __name__ == "__main__":
    main()
