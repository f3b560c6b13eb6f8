"""
Useful versus robust features
=============================

Measure how useful a stamped part and a class texture are for telling a
class apart, and how much of that survives a small L-inf perturbation.
"""

import numpy as np

from featalign import advtrain, datagen, tinynet
from featalign.features import load_expanded
from featalign.robust_stats import (
    FeatureFunction,
    assess,
    build_robust_dataset,
    linear_feature,
    one_vs_rest,
    patch_response,
)

matrix = load_expanded()
cs = matrix.class_set("CS3a")
layout = datagen.feature_layout(matrix, cs, seed=0)
train, _, test = datagen.generate_dataset(matrix, cs, per_class=200, drop_p=0.2, seed=0, layout=layout)

cls = 0
y = one_vs_rest(train.labels, cls)
part = next(f for f in layout.features if f in matrix[cs.classes[cls]])

# a stamp response and a texture detector, both with unit L1 weight, then
# scaled alike so their usefulness clears the reporting floor
def scaled(f, gain=4.0):
    return FeatureFunction(f.name, lambda X: gain * f(X), lambda X: gain * f.grad(X))


texture = layout.textures[cs.classes[cls]][:, :, None] / layout.textures[cs.classes[cls]].size
feats = [scaled(patch_response(layout, part)), scaled(linear_feature(texture, -0.5 * texture.sum(), name="texture"))]
eps = 6 / 255
for f in feats:
    r = assess(f, train.images, y, eps=eps)
    print(f"{r.name:22s} p={r.p:+.4f} gamma={r.gamma:+.4f} -> {r.category}")

# drop everything but the parts: the classifier has to use them
robust_train = build_robust_dataset(train, layout.features, layout, seed=0)
robust_test = build_robust_dataset(test, layout.features, layout, seed=1)
net = advtrain.train_classifier(robust_train, seed=0)
print(f"\nclassifier on part-only images: {tinynet.accuracy(net, robust_test.images, robust_test.labels):.3f}")

# and with no parts at all there is nothing left to learn
empty_train = build_robust_dataset(train, [], layout, seed=0)
empty_test = build_robust_dataset(test, [], layout, seed=1)
net = advtrain.train_classifier(empty_train, seed=0)
acc = tinynet.accuracy(net, empty_test.images, empty_test.labels)
print(f"classifier on empty images:     {acc:.3f} (chance {1 / len(cs.classes):.3f})")
print("pixels differ from source:", not np.array_equal(empty_train.images, train.images))
