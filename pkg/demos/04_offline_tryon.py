"""Offline try-on over a recorded video: crop, synthesize, uncrop, composite.

Uses the toy checkpoint from demo 03 if present, otherwise a constant-color
probe checkpoint (useful for seeing the compositing path in isolation).
Writes the output frames, a per-frame latency report, and a quality summary
against the input.
"""

import json
from pathlib import Path

from tryon.engine import (
    GarmentCatalogEntry,
    GarmentSelector,
    infer_video,
    load_catalog,
    write_catalog_entry,
)
from tryon.perception import PerceptionSet
from tryon.synthesis import ConstantColorSynthesizer

out = Path("demo_output/tryon")
catalog_dir = out / "catalog"

toy_checkpoint = Path("demo_output/toy/run/checkpoint_final.pt")
if toy_checkpoint.exists():
    entry = GarmentCatalogEntry(garment_id="toy-shirt",
                                checkpoint_path=str(toy_checkpoint.resolve()),
                                working_short_side=192)
    print("using the trained toy checkpoint from demo 03")
else:
    d = catalog_dir / "probe"
    d.mkdir(parents=True, exist_ok=True)
    (d / "checkpoint.json").write_text(
        ConstantColorSynthesizer((0.85, 0.2, 0.3), mask_kind="input_silhouette",
                                 roi_side=64).to_json())
    entry = GarmentCatalogEntry(garment_id="probe", checkpoint_path="checkpoint.json")
    print("no trained checkpoint found; using a constant-color probe "
          "(run demos/03_train_toy_garment.py first for the real thing)")
write_catalog_entry(catalog_dir, entry)

selector = GarmentSelector(load_catalog(catalog_dir))
summary = infer_video("synthetic:60x480x640", out / "frames",
                      PerceptionSet.stubs(seed=7), selector,
                      latency_json=str(out / "latency.json"))
print(json.dumps(summary, indent=1))
print(f"output frames in {out}/frames, latency breakdown in {out}/latency.json")
