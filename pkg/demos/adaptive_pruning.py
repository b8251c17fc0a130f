"""Swap pruned detector variants as traffic density changes.

Light traffic tolerates a heavily pruned (faster, less accurate) detector;
dense traffic gets the unpruned one back.  A band change only takes effect
after it has held for two consecutive windows.

    python3 demos/adaptive_pruning.py
"""
from mmstream import TollBoothConfig, build_query, default_catalog, gen_tollbooth
from mmstream.physical import run_adaptive

events = []
# quiet first minute (3 cars/min), rush hour second minute (90 cars/min)
for seed, rate in ((0, 3.0), (1, 90.0)):
    events += list(gen_tollbooth(TollBoothConfig(seed=seed, arrival_rate=rate, duration_frames=1800)))

plan = build_query("Q1")
node = next(n.id for n in plan.nodes if n.op == "Extract")
result = run_adaptive(plan, default_catalog(), events, node, window_frames=300)
for w in result.windows:
    print(f"frames {w['start']:5d}+  density {w['density']:.2f}  model {w['model']:28s} accuracy {w['accuracy']:.2f}")
print(f"{result.switches} model switches, {result.fps:.1f} fps overall")
