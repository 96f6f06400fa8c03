"""Run the whole experiment on a generated archive and read the report.

    python3 demos/synthesize_catalog.py [ARCHIVE] [OUT_DIR]

Without arguments a 600-storm synthetic archive stands in for the observed
record, so the numbers say nothing about real hurricanes. Pass the public
Atlantic HURDAT2 file to run the real experiment.
"""

import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from stormsynth import pipeline
from stormsynth.synthetic_archive import make_archive

work = Path(sys.argv[2] if len(sys.argv) > 2 else tempfile.mkdtemp(prefix="stormsynth_"))
if len(sys.argv) > 1:
    archive = Path(sys.argv[1])
else:
    archive = work / "standin.txt"
    work.mkdir(parents=True, exist_ok=True)
    archive.write_text(make_archive(600, seed=1, start_year=1950, end_year=2021))

# A short training run keeps the demo under a minute; the default is 500 epochs.
cfg = pipeline.PipelineConfig(archive=str(archive), output_dir=str(work / "run"), seed=7)
cfg = replace(cfg, train=replace(cfg.train, epochs=100))
result = pipeline.run(cfg)

print(f"forecast total for the evaluation era: {result.forecast_total}")
print(f"synthetic tracks written:               {result.synthetic_count}")
r = result.report
print(f"Pearson r over touched cells:           {r.pearson_r:.3f}")
print(f"Pearson r over all cells:               {r.pearson_r_all_cells:.3f}")
print(f"NRMSE:                                  {r.nrmse:.3f}")
print(f"touched-cell ratio (synthetic/hist):    {r.touched_ratio:.3f}")
print(f"top-decile overlap:                     {r.top_decile_overlap:.3f}")
print(f"manifest: {result.manifest_path}")
