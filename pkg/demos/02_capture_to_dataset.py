"""Turn a capture video into a per-garment dataset.

Uses synthetic footage and the stub backends; swap in a real video path and
external backends for actual capture. Also prints the 14-pose capture guide
the companion UI shows during recording.
"""

from pathlib import Path

from tryon.dataset import (
    DatasetBuildConfig,
    build_dataset,
    capture_session_guide,
    validate_dataset,
)
from tryon.perception import PerceptionSet
from tryon.video import SyntheticVideoSource

out = Path("demo_output/dataset")

guide = capture_session_guide()
print("capture protocol (shown full-screen by the UI, person rotates 360deg per pose):")
for entry in guide[:3]:
    print(f"  {entry.start_s:5.1f}s  {entry.name} ({entry.duration_s:.1f}s)")
print(f"  ... {len(guide)} poses, {sum(e.duration_s for e in guide):.0f}s total\n")

source = SyntheticVideoSource(n_frames=60, height=480, width=640, seed=1)
backends = PerceptionSet.stubs(seed=7)
cfg = DatasetBuildConfig(garment_id="demo-shirt", out_dir=str(out),
                         roi_side=128, working_short_side=480)
manifest = build_dataset(source, backends, cfg)
print(f"built {len(manifest.records)} records "
      f"({len(manifest.skipped)} skipped), hash {manifest.content_hash[:16]}")

report = validate_dataset(manifest, out)
print(f"validation: {'all records pass' if report.ok else report.failing}")
print(f"dataset in {out}/ (manifest.json + frames/NNNNNN_{{vm,sdp,dp,garment,mask}}.png)")
