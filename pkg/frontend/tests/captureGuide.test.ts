import { describe, expect, it } from "vitest";

import { CaptureGuideRunner, defaultGuideScript } from "../src/captureGuide.js";

describe("capture guide", () => {
  it("walks exactly 14 poses over about two minutes", () => {
    const runner = new CaptureGuideRunner(defaultGuideScript(120));
    const seen = [0];
    runner.onPoseChange = (index) => seen.push(index);
    let completed = false;
    runner.onComplete = () => {
      completed = true;
    };
    let elapsed = 0;
    while (!runner.done && elapsed < 200) {
      runner.advance(0.25);
      elapsed += 0.25;
    }
    expect(seen).toEqual([...Array(14).keys()]);
    expect(completed).toBe(true);
    expect(elapsed).toBeGreaterThanOrEqual(119);
    expect(elapsed).toBeLessThanOrEqual(121);
  });

  it("rejects scripts without exactly 14 poses", () => {
    const script = defaultGuideScript();
    script.poses = script.poses.slice(0, 13);
    expect(() => new CaptureGuideRunner(script)).toThrow(/14/);
  });

  it("shows a rotation prompt and counts down within each pose", () => {
    const runner = new CaptureGuideRunner(defaultGuideScript(140));
    const perPose = 10;
    runner.advance(4);
    const view = runner.view();
    expect(view.poseIndex).toBe(0);
    expect(view.remainingS).toBeCloseTo(perPose - 4, 5);
    expect(view.rotationPrompt).toContain("360");
  });

  it("pause freezes the countdown and resume continues from the paused value", () => {
    const runner = new CaptureGuideRunner(defaultGuideScript(140));
    runner.advance(3);
    const before = runner.view().remainingS;
    runner.pause();
    runner.advance(50);
    expect(runner.view().remainingS).toBeCloseTo(before, 9);
    expect(runner.view().paused).toBe(true);
    runner.resume();
    runner.advance(2);
    expect(runner.view().remainingS).toBeCloseTo(before - 2, 9);
  });

  it("pose index only moves forward", () => {
    const runner = new CaptureGuideRunner(defaultGuideScript(14));
    const indices: number[] = [];
    for (let i = 0; i < 30; i++) {
      runner.advance(0.6);
      indices.push(runner.view().poseIndex);
    }
    for (let i = 1; i < indices.length; i++) {
      expect(indices[i]).toBeGreaterThanOrEqual(indices[i - 1]);
    }
  });
});
