import sys
sys.path.insert(0, "tests")
import numpy as np
import idckit as kk
from idckit.condense import init_condensed
from _surrogate import load_digits28

train, test = load_digits28()

s_i = init_condensed(train.images, train.labels, 10, 10,
                     kk.FormationSpec("identity", 1), "random_real",
                     np.random.default_rng(0))
s_f = init_condensed(train.images, train.labels, 10, 10,
                     kk.FormationSpec("uniform2d", 2), "random_real",
                     np.random.default_rng(0))

jobs = [
    ("ident", s_i, 100, 0.2), ("ident", s_i, 300, 0.2),
    ("f2", s_f, 100, 0.2), ("f2", s_f, 200, 0.2), ("f2", s_f, 300, 0.2),
    ("f2", s_f, 200, 0.1),
]
for tag, s, epochs, lr in jobs:
    rep = kk.evaluate(s, test, epochs=epochs, repetitions=1, seed=0,
                      batch_size=32, lr=lr, depth=3, width=64)
    print(f"{tag}-init E{epochs} lr{lr}: {rep.mean_accuracy:.3f} "
          f"({rep.steps_per_rep} steps, {rep.seconds:.0f}s)", flush=True)
