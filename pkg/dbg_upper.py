import numpy as np
import idckit as kk
from idckit.harness import _train_fresh_net

train = kk.make_blobs(3, 90, image_shape=(1, 16, 16), seed=0)
test = kk.make_blobs(3, 30, image_shape=(1, 16, 16), seed=1)

for per_class in (90, 10, 2):
    accs = []
    for rep in range(3):
        sub = train.restrict_per_class(per_class, seed=rep)
        net = _train_fresh_net(sub.images, sub.labels, 3, total_steps=600,
                               seed=rep, batch_size=64, lr=0.05,
                               depth=2, width=32, with_cutmix=False)
        accs.append(net.accuracy(test.images, test.labels))
    print(f"train on {per_class}/class: {np.mean(accs):.3f} +- {np.std(accs):.3f}")
