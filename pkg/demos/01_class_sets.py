"""
Class sets and feature alignment
================================

Load the bundled class-feature matrix, look at how much the classes in each
class set share, and run the set-matching rule by hand.
"""

from featalign import alignment
from featalign.features import load_expanded

matrix = load_expanded()

# each class is a set of named parts; compound parts are already expanded
for name in ("CS3a", "CS3b", "CS5a", "CS5b"):
    cs = matrix.class_set(name)
    print(f"{name}: {', '.join(cs.classes):<35} parts={cs.parts:2d} overlap={100 * cs.overlap:5.2f}%")

# a perfect extraction of a Dog matches its own row
cs = matrix.class_set("CS3b")
dog = matrix["Dog"]
print("\nDog row:", sorted(dog))
print("similarities:", {c: round(s, 3) for c, s in alignment.similarity_scores(dog, matrix, cs).items()})

# the model says Person, but the parts look like a dog
out = alignment.decide(dog, "Person", matrix, cs, t=0.5)
print(f"distance to Person {out.detection.distance:.3f} -> flagged={out.rectified}, answer={out.predicted_class}")

# a partial extraction is still closer to its own class
partial = frozenset(sorted(dog)[:3])
print("partial", sorted(partial), "->", alignment.rectify(partial, matrix, cs))

# nothing found: maximal distance, always flagged
print("empty extraction flagged:", alignment.detect(frozenset(), matrix["Cat"], 1.0).verdict == alignment.ADVERSARIAL)
