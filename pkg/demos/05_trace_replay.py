"""Recording and replaying denoiser logits through the binary trace format.

Any external model can export its per-step logits as an ODDT file; the
replay denoiser then feeds them back into the engine, so the guidance can
run against models this library has never seen.
"""

import os
import tempfile

import numpy as np

from divdiff import (
    GenerationConfig,
    PlantedDenoiser,
    default_problem,
    generate_batch,
    run_generation,
    trace_read,
    trace_write,
)

task, prompt = default_problem(0)
model = PlantedDenoiser(task)
config = GenerationConfig(
    temperature=1.0, steps=task.length - 1, length=task.length, batch=8, seed=7
)

# record the model's logits along one baseline run; the live run consumes
# the same float32 rounding that lands in the file, so the replay is exact
blocks = []

def recorder(logits, state, remaining):
    rounded = logits.astype(np.float32)
    blocks.append(rounded)
    return rounded.astype(np.float64)

reference = run_generation(model, config, prompt=prompt, guidance=recorder).sequences

path = os.path.join(tempfile.mkdtemp(), "planted.oddt")
trace_write(path, blocks)
size = os.path.getsize(path)
print(f"wrote {len(blocks)} steps of (8, {task.length}, {task.vocab}) "
      f"float32 logits: {size} bytes")

replay = trace_read(path)
print(f"header: steps={replay.steps} batch={replay.batch} "
      f"length={replay.length} vocab={replay.vocab}")

# replaying with the same seed reproduces the recorded sampling decisions
replayed = generate_batch(replay, config, prompt=prompt)
match = all(np.array_equal(a, b) for a, b in zip(reference, replayed))
print(f"replayed outputs match the recorded run: {match}")

# and the guidance can rewrite the recorded logits like any live model
guided = generate_batch(
    replay,
    GenerationConfig(
        temperature=1.0, steps=task.length - 1, length=task.length, batch=8,
        seed=7, guidance="odd", alpha=16.0,
    ),
    prompt=prompt,
)
changed = sum(not np.array_equal(a, b) for a, b in zip(replayed, guided))
print(f"guidance changed {changed} of 8 replayed samples")
