/**
 * Timed capture guide: walks the 14 predefined poses full-screen, counting
 * down each pose while prompting the slow 360-degree rotation, with
 * pause/resume. Driven by explicit time advances so the browser can hook it
 * to requestAnimationFrame and tests can step a fake clock.
 */

export interface GuidePose {
  index: number;
  name: string;
  guide_image: string;
  start_s: number;
  duration_s: number;
  rotation_degrees: number;
}

export interface GuideScript {
  poses: GuidePose[];
  total_s: number;
}

export interface GuideView {
  poseIndex: number;
  poseName: string;
  guideImage: string;
  remainingS: number;
  rotationPrompt: string;
  done: boolean;
  paused: boolean;
}

export class CaptureGuideRunner {
  private index = 0;
  private intoPoseS = 0;
  private pausedFlag = false;
  private doneFlag = false;
  onComplete: (() => void) | null = null;
  onPoseChange: ((index: number) => void) | null = null;

  constructor(private readonly script: GuideScript) {
    if (script.poses.length !== 14) {
      throw new Error(`capture guide expects exactly 14 poses, got ${script.poses.length}`);
    }
  }

  get done(): boolean {
    return this.doneFlag;
  }

  pause(): void {
    this.pausedFlag = true;
  }

  resume(): void {
    this.pausedFlag = false;
  }

  /** Advance wall time; pose index only ever moves forward. */
  advance(dtS: number): void {
    if (this.pausedFlag || this.doneFlag || dtS <= 0) {
      return;
    }
    this.intoPoseS += dtS;
    while (this.intoPoseS >= this.script.poses[this.index].duration_s) {
      this.intoPoseS -= this.script.poses[this.index].duration_s;
      if (this.index === this.script.poses.length - 1) {
        this.doneFlag = true;
        this.intoPoseS = 0;
        this.onComplete?.();
        return;
      }
      this.index += 1;
      this.onPoseChange?.(this.index);
    }
  }

  view(): GuideView {
    const pose = this.script.poses[this.index];
    return {
      poseIndex: this.index,
      poseName: pose.name,
      guideImage: pose.guide_image,
      remainingS: this.doneFlag ? 0 : Math.max(pose.duration_s - this.intoPoseS, 0),
      rotationPrompt: `turn ${pose.rotation_degrees}° slowly in place`,
      done: this.doneFlag,
      paused: this.pausedFlag,
    };
  }
}

/** Uniform 14-pose fallback script matching the engine's default protocol. */
export function defaultGuideScript(totalS = 120, rotationDegrees = 360): GuideScript {
  const names = [
    "arms relaxed at sides", "arms slightly out", "arms raised to shoulders",
    "arms overhead", "hands on hips", "arms forward", "arms crossed",
    "elbows bent upward", "hands behind back", "arms out, elbows bent down",
    "hands clasped in front", "one step stance, arms out",
    "lean forward, arms down", "arms out wide",
  ];
  const duration = totalS / names.length;
  return {
    poses: names.map((name, index) => ({
      index,
      name,
      guide_image: `pose_${String(index).padStart(2, "0")}.png`,
      start_s: index * duration,
      duration_s: duration,
      rotation_degrees: rotationDegrees,
    })),
    total_s: totalS,
  };
}
