import sys, time
sys.path.insert(0, "tests")
import numpy as np
import idckit as kk
from idckit.harness import grad_norm_curve, loss_landscape_sweep
from _surrogate import load_digits28

train, test = load_digits28()

def ev(s, epochs=200):
    return kk.evaluate(s, test, epochs=epochs, repetitions=1, seed=0,
                       batch_size=32, lr=0.2, depth=3, width=64)

# c8 shape: train on the pilot2 ident artifact, watch both gradient norms
s_id = kk.load_condensed("/tmp/p2_ident_0.005.idc")
t0 = time.time()
pts = grad_norm_curve("synthetic", s_id, train, steps=500, seed=0,
                      record_every=25)
syn0, real0 = pts[0].syn_norm, pts[0].real_norm
print(f"gradnorm ({time.time()-t0:.0f}s):", flush=True)
for p in pts:
    print(f"  step {p.step:4d} syn {p.syn_norm/syn0:.3f} "
          f"real {p.real_norm/real0:.3f}", flush=True)

# c9 trend on blobs
blobs = kk.make_blobs(3, 100, (1, 16, 16), class_separation=5.0, seed=0)
t0 = time.time()
cfg = kk.CondenseConfig(outer_loops=1, inner_iters=20, batch_real=64,
                        net_lr=0.01, depth=3, width=64, seed=0)
sweep = loss_landscape_sweep(blobs, counts=[1, 10, 50], factors=[1], cfg=cfg)
print(f"blob sweep ({time.time()-t0:.0f}s): "
      + " ".join(f"n={p.n_per_class}:{p.final_distance:.2f}" for p in sweep),
      flush=True)

# c7: single net trained on its source, MSE matching
for dlr in (0.02, 0.1):
    for source in ("real", "synthetic"):
        cfg = kk.CondenseConfig(outer_loops=1, inner_iters=40, batch_real=64,
                                pretrain_epochs=0, data_lr=dlr,
                                objective="mse", net_source=source,
                                depth=3, width=64, seed=0)
        t0 = time.time()
        s, recs = kk.run(train.images, train.labels, 10, 10,
                         kk.FormationSpec("identity", 1), cfg)
        tc = time.time() - t0
        d = [r.distance for r in recs]
        k = max(len(d) // 10, 1)
        rep = ev(s)
        print(f"mse {source} dlr{dlr}: acc {rep.mean_accuracy:.3f} "
              f"dist {np.mean(d[:k]):.4f}->{np.mean(d[-k:]):.4f} "
              f"condense {tc:.0f}s eval {rep.seconds:.0f}s", flush=True)
