"""Compare the numba kernels with their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Times each kernel at the sizes the models use, then one LSTM autoencoder
training step under each backend (run in a subprocess so the environment
flag takes effect at import).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from sensorcodec import _kernels as K

STEP_SNIPPET = """
import time, numpy as np
from sensorcodec import backend, models
from sensorcodec.models import TrainConfig
m = models.build_lstm_ae(seed=0)
x = np.random.default_rng(0).uniform(size=(128, 128, 9)).astype(np.float32)
cfg = TrainConfig(lr=1e-4, clip_value=0.5, batch_size=128, epochs=1, validation="none")
models.fit(m, x[:8], config=TrainConfig(batch_size=8, epochs=1, validation="none"))
t0 = time.perf_counter()
models.fit(m, x, config=cfg)
print(backend(), time.perf_counter() - t0)
"""


def best_ms(fn, repeat):
    fn()
    return 1e3 * min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases():
    rng = np.random.default_rng(0)
    n, units = 128, 64
    z = rng.normal(size=(n, 4 * units)).astype(np.float32)
    c_prev = rng.normal(size=(n, units)).astype(np.float32)
    gates, c, _ = K.lstm_cell_forward_numpy(z, c_prev, K.ACT_RELU)
    dh = rng.normal(size=(n, units)).astype(np.float32)
    # conv autoencoder pool: 16 x 128 x 9 x 32 values, window 2 along time
    pool_in = rng.normal(size=(16 * 64 * 9 * 32, 2)).astype(np.float32)
    _, idx = K.pool_forward_numpy(pool_in)
    g = rng.normal(size=len(pool_in)).astype(np.float32)
    return {
        "lstm_cell_forward": lambda impl: impl(z, c_prev, K.ACT_RELU),
        "lstm_cell_backward": lambda impl: impl(dh, dh, gates, c, c_prev, K.ACT_RELU),
        "pool_forward": lambda impl: impl(pool_in),
        "pool_backward": lambda impl: impl(g, idx, 2),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--skip-step", action="store_true", help="kernels only")
    args = ap.parse_args()
    if not K.HAS_NUMBA:
        sys.exit("numba is not installed")

    print(f"{'kernel':<22}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, call in kernel_cases().items():
        t_np = best_ms(lambda: call(getattr(K, f"{name}_numpy")), args.repeat)
        t_nb = best_ms(lambda: call(getattr(K, f"{name}_numba")), args.repeat)
        print(f"{name:<22}{t_np:>10.3f}{t_nb:>10.3f}{t_np / t_nb:>8.1f}x")

    if args.skip_step:
        return
    print("\nLSTM autoencoder, one epoch of 128 windows (batch 128):")
    for disable in ("1", "0"):
        env = {**os.environ, "SENSORCODEC_DISABLE_NUMBA": disable}
        out = subprocess.run([sys.executable, "-c", STEP_SNIPPET], env=env, check=True,
                             capture_output=True, text=True).stdout.split()
        print(f"  {out[0]:<6} {float(out[1]):.3f} s")


if __name__ == "__main__":
    main()
