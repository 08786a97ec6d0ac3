# %% [markdown]
# From a WAV file to MFCCs
#
# 25 ms Hamming frames every 10 ms, a 512-point FFT, 26 mel filters, log and
# DCT-II down to 13 coefficients.

# %%
import numpy as np

from percept import audio
from percept.synthetic import tone_clip
from percept.tensor import Prng

clip = tone_clip(196.0, Prng(0))
raw = audio.encode_wav(clip)
buf = audio.parse_wav(raw)
print(buf.sample_rate, buf.samples.shape)

frames = audio.frame_signal(buf)
print("frames", frames.shape)
power = audio.power_spectrum(audio.hamming_window(frames[10]), 512)
peak_hz = np.argmax(power) * buf.sample_rate / 512
print(f"spectral peak near {peak_hz:.0f} Hz")

# %%
feats = audio.mfcc(buf)
print("mfcc", feats.shape)
print(feats[:2].round(2))

# standard scaling is fitted on training rows only, then applied anywhere
scaler = audio.scaler_fit(feats)
print(audio.scaler_transform(scaler, feats).mean(axis=0).round(6))

# %%
paths = audio.render_audio_plots(buf, feats, "plots_demo")
print(sorted(paths))
