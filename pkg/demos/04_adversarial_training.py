"""
Adversarial training and its epsilon
====================================

Train adversarially at a few budgets and compare robust accuracy against
the undefended classifier. Small settings so it runs in about a minute.
"""

from pathlib import Path

from featalign import advtrain, datagen
from featalign.attacks import AttackConfig
from featalign.features import load_expanded

matrix = load_expanded()
cs = matrix.class_set("CS3a")
train, val, test = datagen.generate_dataset(matrix, cs, per_class=200, drop_p=0.2, seed=0)

evals = [AttackConfig("PGD", "Linf", 4.0), AttackConfig("PGD", "Linf", 8.0), AttackConfig("MIA", "Linf", 8.0)]

plain = advtrain.train_classifier(train, seed=0)
print("undefended:", {a.name: round(advtrain.robust_accuracy(plain, test, a), 3) for a in evals})

# inner attack: 10 PGD steps, step size scaled with epsilon
report = advtrain.epsilon_line_search(
    train, val, grid=(2.0, 4.0, 8.0), eval_attacks=evals, seed=0,
    cfg=advtrain.TrainConfig(epochs=15),
)
for eps in report.grid:
    print(f"eps={eps:g}:", {a: round(v, 3) for a, v in report.per_epsilon[eps].items()},
          f"mean {report.mean_accuracy(eps):.3f}")
print("chosen epsilon:", report.chosen)

out = Path("runs/demo_line_search")
csv_path, svg_path = advtrain.write_line_search(report, out)
print("wrote", csv_path, "and", svg_path)
