import sys, time
sys.path.insert(0, "tests")
import numpy as np
import idckit as kk
from _surrogate import load_digits28

train, test = load_digits28()

t0 = time.time()
sel = kk.random_select(train.labels, 10, 10, seed=0)
sub = kk.subset_as_condensed(train.images, train.labels, sel, 10, 10)
rep = kk.evaluate(sub, test, epochs=300, repetitions=3, seed=0,
                  batch_size=64, lr=0.01, depth=3, width=64)
print(f"random 10/class: {rep.mean_accuracy:.3f} +- {rep.std_accuracy:.3f} "
      f"(steps {rep.steps_per_rep}, {rep.seconds:.0f}s)")

sel = kk.random_select(train.labels, 10, 50, seed=0)
sub = kk.subset_as_condensed(train.images, train.labels, sel, 10, 50)
rep = kk.evaluate(sub, test, epochs=120, repetitions=2, seed=0,
                  batch_size=64, lr=0.01, depth=3, width=64)
print(f"random 50/class: {rep.mean_accuracy:.3f} +- {rep.std_accuracy:.3f} "
      f"(steps {rep.steps_per_rep}, {rep.seconds:.0f}s)")
print(f"total {time.time()-t0:.0f}s")
