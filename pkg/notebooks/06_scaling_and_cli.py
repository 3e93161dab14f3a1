# %% [markdown]
# # Scaling and the command-line pipeline
#
# Prediction cost with a fixed number of basis functions grows roughly
# linearly in the number of observations. The dense solve is cubic and is
# only timed for small n. The same workflow runs from the shell through
# `frkpy <command> --config cfg.yaml --out DIR`.

# %%
import sys
import tempfile
from pathlib import Path

from frkpy.bench import format_bench, run_bench
from frkpy.cli import main

rows = run_bench((1_000, 4_000, 16_000), r=100, n_targets=500, dense_max=4000, repeats=2)
print(format_bench(rows))

# %%
out = Path(tempfile.mkdtemp())
cfg = out / "cfg.yaml"
cfg.write_text(
    "seed: 1\n"
    "sim_n: 2000\n"
    "sigma2_eps: 0.2\n"
    "free_sigma2_eps: false\n"
    "free_sigma2_delta: true\n"
    "baseline_matern: true\n"
    "matern_max_n: 800\n"
)
for cmd in ("simulate", "fit", "predict", "validate"):
    status = main([cmd, "--config", str(cfg), "--out", str(out)])
    print(f"{cmd}: exit {status}", file=sys.stderr)
print((out / "diagnostics.txt").read_text())
