import sys, time
sys.path.insert(0, "tests")
import numpy as np
import idckit as kk
from _surrogate import load_digits28

train, test = load_digits28()

EVAL_E = 200
EVAL_LR = 0.2
EVAL_BATCH = 32

def ev(s, epochs=EVAL_E):
    return kk.evaluate(s, test, epochs=epochs, repetitions=1, seed=0,
                       batch_size=EVAL_BATCH, lr=EVAL_LR, depth=3, width=64)

sel = kk.random_select(train.labels, 10, 10, seed=0)
sub = kk.subset_as_condensed(train.images, train.labels, sel, 10, 10)
for e in (200, 300):
    rep = ev(sub, e)
    print(f"random E{e}: {rep.mean_accuracy:.3f} ({rep.seconds:.0f}s)",
          flush=True)

for data_lr in (0.005, 0.02):
    for tag, mode, factor in [("ident", "identity", 1),
                              ("f2", "uniform2d", 2)]:
        cfg = kk.CondenseConfig(outer_loops=2, inner_iters=15, batch_real=64,
                                pretrain_epochs=1, data_lr=data_lr,
                                depth=3, width=64, seed=0)
        spec = kk.FormationSpec(mode, factor)
        t0 = time.time()
        s, recs = kk.run(train.images, train.labels, 10, 10, spec, cfg)
        tc = time.time() - t0
        kk.save_condensed(f"/tmp/p2_{tag}_{data_lr}.idc", s)
        d = [r.distance for r in recs]
        k = max(len(d) // 10, 1)
        rep = ev(s)
        print(f"{tag} dlr{data_lr}: acc {rep.mean_accuracy:.3f} "
              f"dist {np.mean(d[:k]):.1f}->{np.mean(d[-k:]):.1f} "
              f"condense {tc:.0f}s eval {rep.seconds:.0f}s", flush=True)
