# %% [markdown]
# Images: PGM files, resizing and augmentation

# %%
import numpy as np

from percept import imaging
from percept.synthetic import blob_image, grating_image
from percept.tensor import Prng

eye = blob_image(True, Prng(0), size=32)
pgm = imaging.encode_pgm(np.round(eye * 255).astype(np.uint8))
back = imaging.load_pgm(pgm)
print(back.shape, float(np.abs(back - eye).max()))  # 8-bit quantisation only

print(imaging.resize_bilinear(back, 16, 16).shape)

# %%
params = imaging.AugmentParams()
variants = [imaging.affine_augment(back, params, Prng(s)) for s in range(4)]
print([round(float(v.mean()), 3) for v in variants])
print(imaging.affine_transform(back, 90.0).shape)

# %%
# FER-style rows: emotion, 2304 space-separated pixels, usage
row = imaging.format_fer_row(3, grating_image(3, Prng(1)), "Training")
records, errors = imaging.parse_fer_csv("emotion,pixels,Usage\n" + row)
print(records[0].emotion_name, records[0].image.shape, errors)
