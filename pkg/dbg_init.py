import sys
sys.path.insert(0, "tests")
import numpy as np
import idckit as kk
from idckit.condense import init_condensed
from _surrogate import load_digits28

train, test = load_digits28()

spec_i = kk.FormationSpec("identity", 1)
s_i = init_condensed(train.images, train.labels, 10, 10, spec_i,
                     "random_real", np.random.default_rng(0))
spec_f = kk.FormationSpec("uniform2d", 2)
s_f = init_condensed(train.images, train.labels, 10, 10, spec_f,
                     "random_real", np.random.default_rng(0))

sel = kk.random_select(train.labels, 10, 40, seed=0)
sub40 = kk.subset_as_condensed(train.images, train.labels, sel, 10, 40)

jobs = [
    ("ident-init", s_i, 600),
    ("f2-init", s_f, 600),
    ("f2-init", s_f, 1200),
    ("real40", sub40, 600),
]
for tag, s, steps in jobs:
    rep = kk.evaluate_fixed_steps(s, test, steps, repetitions=1, seed=0,
                                  batch_size=64, lr=0.2, depth=3, width=64)
    print(f"{tag} @{steps}: {rep.mean_accuracy:.3f} ({rep.seconds:.0f}s)",
          flush=True)
