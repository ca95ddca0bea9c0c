import time
import numpy as np
import idckit as kk

train = kk.make_blobs(3, 90, image_shape=(1, 16, 16), seed=0)
test = kk.make_blobs(3, 30, image_shape=(1, 16, 16), seed=1)

cfg = kk.CondenseConfig(outer_loops=3, inner_iters=10, batch_real=48,
                        depth=2, width=32, seed=0)

for mode, factor in [("identity", 1), ("uniform2d", 2)]:
    spec = kk.FormationSpec(mode, factor)
    t0 = time.time()
    s, recs = kk.run(train.images, train.labels, 3, 2, spec, cfg)
    d0 = np.mean([r.distance for r in recs[:3]])
    d1 = np.mean([r.distance for r in recs[-3:]])
    rep = kk.evaluate(s, test, epochs=300, repetitions=4, seed=0,
                      batch_size=64, lr=0.05, depth=2, width=32)
    print(f"{mode} f{factor}: acc {rep.mean_accuracy:.3f} +- {rep.std_accuracy:.3f} "
          f"dist {d0:.2f}->{d1:.2f}  ({time.time()-t0:.1f}s)")

sel = kk.random_select(train.labels, 3, 2, seed=0)
sub = kk.subset_as_condensed(train.images, train.labels, sel, 3, 2)
rep = kk.evaluate(sub, test, epochs=300, repetitions=4, seed=0,
                  batch_size=64, lr=0.05, depth=2, width=32)
print(f"random 2/class: acc {rep.mean_accuracy:.3f} +- {rep.std_accuracy:.3f}")
