import numpy as np
import idckit as kk
from idckit import tensor as T
from idckit.models import ConvNet, one_hot, sgd_step
from idckit.harness import _cosine_lr

train = kk.make_blobs(3, 90, image_shape=(1, 16, 16), seed=0)
test = kk.make_blobs(3, 30, image_shape=(1, 16, 16), seed=1)

def train_plain(images, labels, steps, seed, lr=0.05):
    rng = np.random.default_rng(seed)
    net = ConvNet(images.shape[1:], 3, depth=2, width=32,
                  seed=int(rng.integers(2 ** 31)))
    n = images.shape[0]
    soft_all = one_hot(labels, 3)
    step = 0
    while step < steps:
        order = rng.permutation(n)
        for start in range(0, n, 64):
            if step >= steps:
                break
            take = order[start:start + 64]
            with T.Tape():
                loss = net.loss(T.Tensor(images[take]), soft_all[take])
                grads = T.grad(loss, net.params)
            net.params = sgd_step(net.params, grads, _cosine_lr(lr, step, steps))
            step += 1
    return net

for per_class in (90, 2):
    accs = []
    for rep in range(3):
        sub = train.restrict_per_class(per_class, seed=rep)
        net = train_plain(sub.images, sub.labels, 600, rep)
        accs.append(net.accuracy(test.images, test.labels))
    print(f"no-aug {per_class}/class: {np.mean(accs):.3f} +- {np.std(accs):.3f}")
