"""Kinematic peg-in-hole simulator tour.

Shows a sampled world layout, noisy detections, a spiral-search rollout
trace, and the empirical success rate as a function of the capture radius
(the knob the `calibrate` command tunes).

Run: python demos/02_spiral_search_simulator.py
"""

import numpy as np

from belieffit import (
    EnvConfig,
    PegType,
    SpiralParams,
    calibrate_alpha,
    derive_rng,
    rollout_low_level,
    spawn_world,
    tune_capture_radius,
    vision_detect,
)

config = EnvConfig()
spiral = SpiralParams()

world = spawn_world(config, derive_rng(7, 0), spiral)
detections = vision_detect(world, derive_rng(7, 1))
print("hole  type  true position [cm]      detection [cm]   error [cm]")
for i, (hole, det) in enumerate(zip(world.holes, detections)):
    err = np.linalg.norm(det - hole.position) * 100
    print(f"{i:4d}  {hole.hole_type:4d}  ({hole.position[0]*100:+6.2f}, "
          f"{hole.position[1]*100:+6.2f})      ({det[0]*100:+6.2f}, "
          f"{det[1]*100:+6.2f})   {err:6.2f}")

# --- one rollout, started from the noisy detection -------------------------
hole = world.holes[0]
outcome = rollout_low_level(
    detections[0], PegType(hole.hole_type), hole, spiral, config.horizon_low,
    derive_rng(7, 2), capture_radius=config.capture_radius,
    alignment_rate=config.alignment_rate,
)
print()
print(f"rollout on hole 0: success={outcome.success}, steps={len(outcome.trace)}")
closest = outcome.trace.closest_approach(hole.position)
print(f"closest approach to the hole: {closest*100:.2f} cm")
contact_frac = np.mean([s.contact for s in outcome.trace.steps])
print(f"fraction of steps in contact: {contact_frac:.2f}")

# --- success rate vs capture radius ----------------------------------------
print()
print("matched-pair success rate vs capture radius (500 rollouts each):")
print("radius[mm]   success rate")
for cr_mm in (1.0, 2.5, 5.0, 10.0, 20.0):
    rate = calibrate_alpha(
        config, spiral, 500, derive_rng(7, 3), capture_radius=cr_mm / 1000
    )
    print(f"{cr_mm:10.1f}   {rate:.3f}")

print()
print("Tuning the radius toward the reference matched-pair rate 0.34:")
result = tune_capture_radius(config, spiral, 0.34, 400, derive_rng(7, 4))
print(f"  tuned radius {result.capture_radius*1000:.1f} mm "
      f"-> measured rate {result.alpha_hat:.3f}")
print("  The rate plateaus near the alignment ceiling once the funnel covers")
print("  the detector noise, so any radius on the plateau matches the target")
print(f"  within sampling noise.  The task default stays "
      f"{config.capture_radius*1000:.1f} mm; that small funnel is what makes "
      "position estimates matter.")
