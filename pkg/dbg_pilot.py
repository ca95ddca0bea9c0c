import sys, time
sys.path.insert(0, "tests")
import numpy as np
import idckit as kk
from _surrogate import load_digits28

train, test = load_digits28()

cfg = kk.CondenseConfig(outer_loops=2, inner_iters=30, batch_real=64,
                        depth=3, width=64, seed=0)

EVAL_STEPS = 600
EVAL_LR = 0.2

results = {}
for tag, mode, factor in [("ident", "identity", 1), ("f2", "uniform2d", 2)]:
    spec = kk.FormationSpec(mode, factor)
    t0 = time.time()
    s, recs = kk.run(train.images, train.labels, 10, 10, spec, cfg)
    tc = time.time() - t0
    d = [r.distance for r in recs]
    k = max(len(d) // 10, 1)
    kk.save_condensed(f"/tmp/pilot_{tag}.idc", s)
    rep = kk.evaluate_fixed_steps(s, test, EVAL_STEPS, repetitions=2, seed=0,
                                  batch_size=64, lr=EVAL_LR, depth=3, width=64)
    results[tag] = rep.mean_accuracy
    print(f"{tag}: acc {rep.mean_accuracy:.3f} +- {rep.std_accuracy:.3f} "
          f"dist {np.mean(d[:k]):.1f}->{np.mean(d[-k:]):.1f} "
          f"condense {tc:.0f}s eval {rep.seconds:.0f}s", flush=True)

sel = kk.random_select(train.labels, 10, 10, seed=0)
sub = kk.subset_as_condensed(train.images, train.labels, sel, 10, 10)
rep = kk.evaluate_fixed_steps(sub, test, EVAL_STEPS, repetitions=2, seed=0,
                              batch_size=64, lr=EVAL_LR, depth=3, width=64)
results["random"] = rep.mean_accuracy
print(f"random: acc {rep.mean_accuracy:.3f} +- {rep.std_accuracy:.3f}", flush=True)
print(f"margins: f2-ident {results['f2']-results['ident']:+.3f} "
      f"ident-random {results['ident']-results['random']:+.3f}")
