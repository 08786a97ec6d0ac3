# %% [markdown]
# Driving everything from the command line
#
# The same calls a shell user would make, run in-process through `main`.

# %%
import tempfile
from pathlib import Path

from percept import synthetic
from percept.cli import main

work = Path(tempfile.mkdtemp())
manifest = synthetic.make_speaker_dataset(work / "speakers", clips_per_class=30, seed=5)
(work / "run.toml").write_text(f"""
task = "speaker"
data = "{manifest}"
seed = 42
out_dir = "out"

[train]
epochs = 6
""")

# %%
print(main(["featurize", "--config", str(work / "run.toml")]))
print(main(["train", "--config", str(work / "run.toml"), "--quiet"]))
print(sorted(p.name for p in (work / "out").iterdir()))

# %%
print(main(["eval", str(work / "out" / "model.prcp"), str(manifest), "--out", str(work / "eval")]))
clip = next((work / "speakers").rglob("*.wav"))
print(main(["plot", str(clip), "--out", str(work / "plot")]))
print((work / "out" / "history.csv").read_text().splitlines()[:3])
