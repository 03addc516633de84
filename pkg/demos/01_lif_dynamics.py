"""Single-neuron dynamics: membrane trace, soft reset, and leak.

Drives one neuron with a fixed input current and prints the membrane
potential step by step, then shows how the leak factor shapes the
firing rate of a Poisson-driven population.
"""

import numpy as np

from snncompress.encoding import poisson_encode
from snncompress.lif import LIFConfig, NeuronState, lif_step


def trace_single_neuron():
    print("== constant drive, v_th=1.0, leak=0.9 ==")
    cfg = LIFConfig(leak_lambda=0.9, v_th=1.0)
    state = NeuronState.zeros((1,))
    drive = np.array([0.4])
    for t in range(10):
        state, spikes = lif_step(state, drive, cfg)
        marker = " <- spike, threshold subtracted" if spikes[0] else ""
        print(f"t={t:2d}  u={state.u[0]:+.4f}{marker}")
    print(f"total spikes: {state.spike_count[0]:.0f}\n")


def leak_sweep():
    # Same Poisson input, different leaks: stronger decay needs more
    # coincident input to reach threshold, so the rate drops.
    print("== firing rate vs leak (same 200-neuron Poisson drive) ==")
    rng = np.random.default_rng(3)
    images = rng.uniform(0.0, 1.0, size=(1, 1, 10, 20))
    spikes = poisson_encode(images, timesteps=80, seed=0)[:, 0]
    flat = spikes.reshape(80, -1)
    for leak in (1.0, 0.9901, 0.95, 0.8, 0.5):
        cfg = LIFConfig(leak_lambda=leak, v_th=1.0)
        state = NeuronState.zeros((flat.shape[1],))
        for t in range(flat.shape[0]):
            state, _ = lif_step(state, 0.3 * flat[t], cfg)
        rate = state.spike_count.mean() / 80
        print(f"leak={leak:6.4f}  mean rate {rate:.4f} spikes/step")
    print()


def raster():
    print("== raster of 8 Poisson-encoded pixels (intensity 0.1..0.8) ==")
    img = np.linspace(0.1, 0.8, 8).reshape(1, 1, 1, 8)
    spikes = poisson_encode(img, timesteps=40, seed=7)[:, 0, 0, 0]
    for i in range(8):
        row = "".join("|" if s else "." for s in spikes[:, i])
        print(f"p={0.1 + 0.1 * i:.1f}  {row}")


if __name__ == "__main__":
    trace_single_neuron()
    leak_sweep()
    raster()
