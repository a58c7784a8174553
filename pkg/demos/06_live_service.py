"""Run the live try-on service that backs the browser UI.

Builds a small probe catalog (plus the trained toy garment if demo 03 ran),
then serves HTTP + WebSocket until interrupted:

    GET  /garments               catalog + current selection
    POST /garments/select        {"garment_id": "..."}
    GET  /stats                  fps and stage latencies
    WS   /stream                 binary frames in both directions

Point the frontend at it (see frontend/README.md) or probe with curl:
    curl localhost:8789/garments
"""

from pathlib import Path

from tryon.engine import GarmentCatalogEntry, write_catalog_entry
from tryon.perception import PerceptionSet
from tryon.service import serve
from tryon.synthesis import ConstantColorSynthesizer

catalog_dir = Path("demo_output/service_catalog")
for gid, color in (("crimson", (0.85, 0.2, 0.3)), ("teal", (0.1, 0.6, 0.6))):
    d = catalog_dir / gid
    d.mkdir(parents=True, exist_ok=True)
    (d / "checkpoint.json").write_text(
        ConstantColorSynthesizer(color, mask_kind="input_silhouette",
                                 roi_side=64).to_json())
    write_catalog_entry(catalog_dir, GarmentCatalogEntry(
        garment_id=gid, checkpoint_path="checkpoint.json"))

toy_checkpoint = Path("demo_output/toy/run/checkpoint_final.pt")
if toy_checkpoint.exists():
    write_catalog_entry(catalog_dir, GarmentCatalogEntry(
        garment_id="toy-shirt", checkpoint_path=str(toy_checkpoint.resolve()),
        working_short_side=192))

print("serving on http://127.0.0.1:8789 (ctrl-c to stop)")
serve(catalog_dir, port=8789, backends=PerceptionSet.stubs(seed=7))
