"""
Attacking a classifier and catching it with part alignment
===========================================================

Generate a synthetic class set, train the classifier and a part extractor,
attack the classifier with PGD and MIA, then score detection and defense.
"""

import numpy as np

from featalign import advtrain, datagen, tinynet
from featalign.attacks import AttackConfig, attack_batch
from featalign.evaluation import defense_eval, detection_eval
from featalign.extractor import mean_feature_f1, train_extractor
from featalign.features import load_expanded
from featalign.robust_stats import build_robust_dataset

matrix = load_expanded()
cs = matrix.class_set("CS3a")
layout = datagen.feature_layout(matrix, cs, seed=0)
train, val, test = datagen.generate_dataset(matrix, cs, per_class=300, drop_p=0.2, seed=0, layout=layout)
print(f"{len(train)} train / {len(test)} test images of shape {train.image_shape}")

# the classifier sees everything, including the class textures
model = advtrain.train_classifier(train, seed=0)
print(f"clean accuracy {tinynet.accuracy(model, test.images, test.labels):.3f}")

# the extractor is trained on copies that keep only the stamped parts
ext = train_extractor(build_robust_dataset(train, layout.features, layout), seed=0)
print(f"extractor F1 on test {mean_feature_f1(ext, test):.3f}")

for cfg in (AttackConfig("PGD", "Linf", 8.0), AttackConfig("MIA", "Linf", 8.0), AttackConfig("PGD", "Linf", 16.0)):
    adv, success = attack_batch(model, test, cfg)
    acc = tinynet.accuracy(model, adv.images, adv.labels)
    curve, _ = detection_eval(model, ext, matrix, cs, test, adv.subset(success))
    defended = defense_eval(model, ext, matrix, cs, adv)
    print(f"{cfg.name:12s} success {success.mean():.3f}  model acc {acc:.3f}  "
          f"detection AUC {curve.auc:.3f}  defended acc {defended:.3f}")

# the operating point at the default threshold
i = int(np.argmin(np.abs(curve.thresholds - 0.5)))
print(f"at t=0.5: TPR {curve.tpr[i]:.3f}, FPR {curve.fpr[i]:.3f}")
