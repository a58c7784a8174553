"""Walk through the hybrid person representation on one synthetic frame.

Renders the block-figure frame, estimates pose with the stub backend, builds
the grid-textured measurement render and the simplified surface map, crops
the upper-body square, and saves every intermediate as a PNG.
"""

from pathlib import Path

from tryon import densepose, imaging, measurement, perception, synthetic

out = Path("demo_output/representation")
out.mkdir(parents=True, exist_ok=True)

frame = synthetic.synthetic_frame(0, 30, 480, 640, seed=0)
imaging.save_image(out / "frame.png", frame)

backends = perception.PerceptionSet.stubs(seed=7)

pose = backends.pose.estimate_pose(frame)
print(f"pose: camera scale={pose.camera.scale:.1f} px/unit, "
      f"center=({pose.camera.tx:.0f}, {pose.camera.ty:.0f})")

mesh = measurement.trim_body_mesh(pose.pose_params, pose.shape_params)
print(f"trimmed mesh: {len(mesh.vertices)} vertices, {len(mesh.faces)} faces "
      "(head, hands and lower body removed)")
vm = measurement.render_measurement_garment(mesh, measurement.GridTexture(),
                                            pose.camera, 480, 640)
imaging.save_image(out / "measurement_garment.png", vm)

dp = backends.densepose.estimate_densepose(frame)
dp_img = densepose.encode_iuv(dp)
sdp_img = densepose.simplify(dp_img)
imaging.save_image(out / "densepose.png", dp_img)
imaging.save_image(out / "densepose_simplified.png", sdp_img)

roi = densepose.upper_body_roi(dp, target_side=512)
print(f"upper-body crop: side {roi.source_side:.0f}px at "
      f"({roi.center_x:.0f}, {roi.center_y:.0f}) -> {roi.target_side}px")

vm_roi = imaging.roi_extract(vm, roi, imaging.BILINEAR)
sdp_roi = imaging.roi_extract(sdp_img, roi, imaging.NEAREST)
imaging.save_image(out / "roi_vm.png", vm_roi)
imaging.save_image(out / "roi_sdp.png", sdp_roi)

rep = imaging.build_representation("hybrid", vm=vm_roi, sdp=sdp_roi)
print(f"hybrid representation: {rep.data.shape[0]} channels "
      f"({rep.data.shape[1]}x{rep.data.shape[2]})")
print(f"artifacts in {out}/")
