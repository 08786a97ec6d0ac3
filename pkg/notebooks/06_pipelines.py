# %% [markdown]
# The three recipes end to end
#
# Synthetic stand-ins for the real datasets: five sine "speakers", bright vs
# dark eye blobs, and seven oriented gratings for facial expressions.

# %%
import tempfile
from pathlib import Path

from percept import synthetic
from percept.pipelines import PipelineConfig, load_model, run_training

work = Path(tempfile.mkdtemp())
speakers = synthetic.make_speaker_dataset(work / "speakers", clips_per_class=40, seed=1)
eyes = synthetic.make_eye_dataset(work / "eyes", n_images=120, size=32, seed=2)
fer = synthetic.make_fer_csv(work / "fer.csv", per_class=20, seed=3)

# %%
run = run_training(PipelineConfig("speaker", speakers, seed=1, epochs=8), work / "speaker_run")
print("speaker", run.report.metrics.accuracy, run.report.metrics.weighted_f1)
model = load_model(work / "speaker_run" / "model.prcp")
print(model.label_names, model.input_shape)

# %%
run = run_training(PipelineConfig("eye", eyes, seed=1, epochs=5, image_size=32))
print("eye", run.report.metrics.accuracy, run.report.metrics.f1.round(3))

# five epochs is far from converged; the 20-epoch default is what the recipe expects
run = run_training(PipelineConfig("fer", fer, seed=1, epochs=5, batch_size=32))
print("fer", run.report.metrics.accuracy)
print(run.report.confusion)
