"""How far can the executor skip after an empty frame without missing a car?

The skip amount comes from camera rate, top speed and the entry distance.
This demo computes it, then shows what happens when the stated speed limit
understates real traffic: validation on a sample catches the lost cars and
the optimizer backs the skip off until accuracy recovers.

    python3 demos/skip_safety.py
"""
from mmstream import TollBoothConfig, build_query, compute_skip_amount, gen_tollbooth, semantic_search

for fps, v_max, d in [(30, 30, 1.0), (30, 60, 1.0), (60, 30, 1.0)]:
    print(f"{fps} fps, {v_max} km/h, {d} m entry -> skip {compute_skip_amount(fps, v_max, d)} frames")

# metadata claims 15 km/h, cars actually drive up to 30 km/h
cfg = TollBoothConfig(seed=0, v_max_kmh=15.0, actual_v_max_kmh=30.0, dwell_frames_min=8,
                      dwell_frames_max=16, duration_frames=1800)
stream = gen_tollbooth(cfg)
out = semantic_search(build_query("Q1"), stream, sample=list(stream))
print(f"\nstated limit {cfg.v_max_kmh} km/h, real traffic up to {cfg.actual_v_max_kmh} km/h")
for name, res in out.attempts:
    print(f"    {name}: relative accuracy {res.relative_accuracy:.3f} ({'pass' if res.passed else 'fail'})")
print(f"final plan: {out.plan.describe()}")
