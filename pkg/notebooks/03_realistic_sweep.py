# coding: utf-8

# # A small realistic benchmark
#
# Generate a dataset with the realistic recipe (linear light, 98th
# percentile clip, gamma 2.2, noise, 8-bit), sweep the regularization
# weight for three energies and summarize best-over-lambda PSNR.
# Needs scikit-image for the bundled photographs.

# In[1]:

import tempfile
from pathlib import Path

from realdeconv.benchmark import SweepSpec, run_sweep, summarize
from realdeconv.dataset import fixture_sources, make_dataset, motion_kernel, realistic_params
from realdeconv.solver import SolverConfig

# In[2]:

out = Path(tempfile.mkdtemp())
names, sources = fixture_sources(2, 144)
kernels = [motion_kernel(9, seed) for seed in range(2)]
manifest = make_dataset(sources, kernels, realistic_params(0), out / "data", pairing="cycle", source_names=names)
for e in manifest.entries:
    print(e.id, e.source, e.kernel_id, "clip level", round(e.params.c, 4))

# In[3]:

configs = ["gamma_inverse+tv", "full+tv", "full+tv_gamma"]
# a finer stopping step than the default helps the gamma-aware energies in dark regions
solver = SolverConfig(seed=1, delta_min=1 / 8192)
spec = SweepSpec(str(manifest.path), [3e-4, 1e-3, 3e-3], configs, solver)
rows = run_sweep(spec, out / "rows.csv")
summary = summarize(rows)
print(summary.table())

# In[4]:

# Plots and per-config CSVs land next to the rows file.
for path in summary.write(out / "report") + summary.render(out / "report"):
    print(path)
