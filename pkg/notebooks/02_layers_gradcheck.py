# %% [markdown]
# Layers and gradient checks
#
# A network is a list of layer specs. Forward passes keep caches and backward
# passes consume them. `check_network` compares every analytic gradient with a
# central difference on a float64 copy.

# %%
import numpy as np

from percept.gradcheck import check_network
from percept.layers import LSTM, BatchNorm, Conv2D, Dense, Flatten, MaxPool2D, Network, ReLU, Softmax
from percept.tensor import Prng

specs = [Conv2D(4, 3, 3, 1, "same"), BatchNorm(), ReLU(), MaxPool2D(2, 2), Flatten(), Dense(3), Softmax()]
net = Network(specs, (1, 8, 8), Prng(0))
print("output", net.output_shape, "params", net.n_params())

x = np.random.default_rng(0).random((5, 1, 8, 8)).astype(np.float32)
probs = net.forward(x)[0]
print(probs.round(3), probs.sum(axis=1))

# %%
errors, skipped = check_network(specs, (1, 6, 6), seed=3, batch=8, input_scale=3.0)
for name, err in errors.items():
    print(f"{name:>16s}  {err:.2e}")
print("probes skipped at kinks:", skipped)

# %%
# the recurrent layer gets the same treatment
errors, _ = check_network([LSTM(4), Dense(2), Softmax()], (3, 2), seed=1)
print(max(errors.values()))
