"""Train a per-garment model on the closed-loop toy task and watch it learn.

The toy dataset's target garment is a fixed channel recoloring of the
measurement render, so holdout masked-L1 and SSIM measure exactly how well
the network learned the data-generating function. 300 steps is enough to see
the trend; the acceptance suite runs the full 2,000-step protocol.
"""

import sys
from pathlib import Path

from tryon import toytask
from tryon.training import GarmentTrainer

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
out = Path("demo_output/toy")

dataset_dir = out / "dataset"
if not (dataset_dir / "manifest.json").exists():
    manifest = toytask.build_toy_dataset(dataset_dir)
    print(f"built toy dataset: {len(manifest.records)} records")

cfg = toytask.toy_train_config(seed=0, max_steps=steps)
trainer = GarmentTrainer(dataset_dir, cfg, out / "run")
before = trainer.evaluate()
print(f"untrained: masked-L1 {before['masked_l1']:.3f}, SSIM {before['ssim']:.3f}")

result = trainer.train()
print(f"trained {result.steps} steps "
      f"(loss EMA: fm {result.ema.get('fm', 0):.4f}, vgg {result.ema.get('vgg', 0):.4f})")
for summary in result.evaluations:
    print(f"  step {summary['step']:5d}: masked-L1 {summary['masked_l1']:.4f}, "
          f"SSIM {summary['ssim']:.4f}")
print(f"final checkpoint: {result.final_checkpoint}")
