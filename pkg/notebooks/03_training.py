# %% [markdown]
# Training loop, Adam and early stopping
#
# A toy two-class problem: points inside vs outside a circle.

# %%
import numpy as np

from percept.layers import Dense, Network, ReLU, Softmax
from percept.metrics import confusion_matrix, metrics_from_confusion
from percept.tensor import Prng
from percept.training import Adam, EarlyStopper, fit, split_dataset

rng = np.random.default_rng(0)
x = rng.uniform(-1, 1, (600, 2)).astype(np.float32)
y = (np.hypot(x[:, 0], x[:, 1]) < 0.7).astype(int)
tr, va, te = split_dataset(y, (0.7, 0.15, 0.15), seed=1)
print(len(tr), len(va), len(te))

# %%
net = Network([Dense(32), ReLU(), Dense(2), Softmax()], (2,), Prng(2))
stopper = EarlyStopper(patience=5, initial_params=net.params)
result = fit(net, (x[tr], y[tr]), (x[va], y[va]), "sparse", Adam(0.01), 100, 32, Prng(3), stopper=stopper)
print(f"ran {len(result.history)} epochs, best epoch {result.best_epoch}")
print(result.history[-1])

# %%
pred = np.argmax(net.predict(x[te]), axis=1)
m = metrics_from_confusion(confusion_matrix(y[te], pred, 2))
print("accuracy", m.accuracy, "per-class F1", m.f1.round(3))
