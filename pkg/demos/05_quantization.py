"""Weight-sharing quantization: codebooks, compression rate, accuracy.

Quantizes a small trained spiking model to 5-bit shared-weight
codebooks, prints the per-layer compression statistics, and compares
the serialized model files so the rate shows up as real bytes.
"""

import os
import tempfile

import numpy as np

from snncompress.network import build_config, init_weights
from snncompress.pipeline.datasets import load_synthetic
from snncompress.pipeline.model_io import (ModelArtifact, index_bits,
                                           packed_size, save_model_file)
from snncompress.quantize import kmeans_cluster, quantize_network
from snncompress.simulate import evaluate
from snncompress.training.ann import AnnTrainConfig, train_ann
from snncompress.training.bptt import SnnTrainConfig, train_snn
from snncompress.training.convert import convert_to_snn

TIMESTEPS = 12
SEED = 3
BITS = 5


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
    snn, _ = convert_to_snn(net, ds.train_x[:200], TIMESTEPS, seed=SEED)
    train_snn(snn, ds.train_x, ds.train_y, ds.val_x, ds.val_y, TIMESTEPS,
              SnnTrainConfig(epochs=2, lr=1e-3, seed=SEED))
    before = evaluate(snn, ds.test_x, ds.test_y, TIMESTEPS, seed=SEED)

    # One layer up close: 2**BITS cluster centers stand in for every
    # distinct weight value.
    w = snn.weights[0]
    trace: list[float] = []
    book = kmeans_cluster(w, 2 ** BITS, wcss_trace=trace)
    print(f"layer 0: {w.size} weights -> {len(book.centroids)} centers")
    print(f"refinement cost: {trace[0]:.5f} -> {trace[-1]:.5f} "
          f"in {len(trace)} sweeps")
    print("centers:", np.array2string(np.sort(book.centroids)[:6],
                                      precision=3), "...\n")

    result = quantize_network(snn, BITS, seed=SEED)
    print("layer  params  bits  clusters  rate")
    for s in result.stats:
        print(f"{s.layer_index:5d}  {s.p:6d}  {s.b:4d}  {s.z:8d}  {s.r:.2f}x")
    print(f"overall compression rate: {result.overall_rate:.2f}x")

    after = evaluate(result.network, ds.test_x, ds.test_y, TIMESTEPS,
                     seed=SEED)
    print(f"test accuracy: {before:.4f} -> {after:.4f} "
          f"({(after - before) * 100:+.2f} points)\n")

    # The stored representation per layer: packed cluster indices plus
    # float32 centers, against four bytes per dense weight.
    dense_bytes = sum(4 * w.size for w in snn.weights)
    coded_bytes = sum(
        packed_size(b.assignments.size, index_bits(b.n_clusters))
        + 4 * b.n_clusters for b in result.codebooks)
    print(f"weight payload: {dense_bytes} bytes dense -> "
          f"{coded_bytes} bytes as indices+centers "
          f"({dense_bytes / coded_bytes:.2f}x smaller)")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.snnc")
        save_model_file(ModelArtifact(result.network, timesteps=TIMESTEPS,
                                      codebooks=result.codebooks), path)
        print(f"full artifact (header, weights, codebooks): "
              f"{os.path.getsize(path)} bytes at {path.split('/')[-1]}")


if __name__ == "__main__":
    main()
