# %% [markdown]
# Tensors and the seeded generator
#
# Tensors are plain float32 numpy arrays. The helpers below add shape checks
# and float64 accumulation; the generator is SplitMix64, so a seed gives the
# same stream on every machine.

# %%
import numpy as np

from percept.tensor import Prng, argmax, filled, matmul, tmap

a = filled((2, 3), 0.5)
b = np.arange(6, dtype=np.float32).reshape(3, 2)
print(matmul(a, b))
print(tmap(b, np.tanh).round(3))
print("argmax of [1, 7, 7, 2]:", argmax(np.array([1, 7, 7, 2])))  # first of the ties

# %%
g = Prng(1234567)
print([g.next_u64() for _ in range(3)])

# spawned children are independent streams, handy for one per subsystem
parent = Prng(7)
init, shuffle = parent.spawn(), parent.spawn()
print(init.uniform((2, 2), -1, 1))
print(shuffle.permutation(8))
