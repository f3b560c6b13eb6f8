"""Robust-feature vocabulary, class-feature matrix and class-set statistics."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

FeatureSet = frozenset  # frozenset[str] of canonical feature names

BUNDLED_MATRIX = "class_features.json"
HANDLEBAR_MATRIX = "class_features_handlebar.json"


class MatrixLoadError(ValueError):
    """Raised when a matrix file cannot be parsed or validated."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def canonical(name: str) -> str:
    return " ".join(str(name).split()).lower()


@dataclass(frozen=True)
class FeatureVocabulary:
    features: tuple[str, ...]
    subfeatures: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        names = [canonical(f) for f in self.features]
        if any(not n for n in names):
            raise ValueError("feature names must be non-empty")
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature names")
        subs = {canonical(k): tuple(canonical(s) for s in v) for k, v in self.subfeatures.items()}
        for compound, parts in subs.items():
            if compound not in names:
                raise ValueError(f"sub-feature map refers to unknown feature {compound!r}")
            for p in parts:
                if not p or p in names:
                    raise ValueError(f"sub-feature {p!r} clashes with a top-level feature")
        object.__setattr__(self, "features", tuple(names))
        object.__setattr__(self, "subfeatures", subs)

    def __contains__(self, name: str) -> bool:
        return canonical(name) in self.identifiers

    @property
    def identifiers(self) -> frozenset[str]:
        out = set(self.features)
        for parts in self.subfeatures.values():
            out.update(parts)
        return frozenset(out)

    @property
    def atomic(self) -> tuple[str, ...]:
        """Feature names after sub-feature expansion, in vocabulary order."""
        out: list[str] = []
        for f in self.features:
            out.extend(self.subfeatures.get(f, (f,)))
        return tuple(out)

    def make_set(self, names: Iterable[str]) -> FeatureSet:
        members = frozenset(canonical(n) for n in names)
        unknown = members - self.identifiers
        if unknown:
            raise KeyError(f"unknown feature(s): {sorted(unknown)}")
        return members

    def expand(self, fs: Iterable[str]) -> FeatureSet:
        out: set[str] = set()
        for f in fs:
            out.update(self.subfeatures.get(f, (f,)))
        return frozenset(out)


@dataclass(frozen=True)
class ClassSet:
    name: str
    classes: tuple[str, ...]
    parts: int
    shared: int

    @property
    def overlap(self) -> float:
        return self.shared / self.parts if self.parts else 0.0


@dataclass(frozen=True)
class ClassFeatureMatrix:
    vocab: FeatureVocabulary
    classes: tuple[str, ...]
    rows: Mapping[str, FeatureSet]
    class_sets: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("duplicate class names")
        if set(self.rows) != set(self.classes):
            raise ValueError("rows and class list disagree")
        for c in self.classes:
            row = self.rows[c]
            if not row:
                raise ValueError(f"class {c!r} has an empty feature set")
            self.vocab.make_set(row)
        for name, members in self.class_sets.items():
            missing = [c for c in members if c not in self.rows]
            if missing:
                raise ValueError(f"class set {name!r} names unknown classes {missing}")

    def __getitem__(self, cls: str) -> FeatureSet:
        return self.expected_features(cls)

    def expected_features(self, cls: str) -> FeatureSet:
        try:
            return self.rows[cls]
        except KeyError:
            raise KeyError(f"unknown class {cls!r}") from None

    def class_set(self, name: str) -> ClassSet:
        try:
            members = self.class_sets[name]
        except KeyError:
            raise KeyError(f"unknown class set {name!r}") from None
        return class_set_stats(self, members, name=name)


def expand_subfeatures(matrix: ClassFeatureMatrix) -> ClassFeatureMatrix:
    rows = {c: matrix.vocab.expand(matrix.rows[c]) for c in matrix.classes}
    return ClassFeatureMatrix(matrix.vocab, matrix.classes, rows, dict(matrix.class_sets))


def expected_features(matrix: ClassFeatureMatrix, cls: str) -> FeatureSet:
    return matrix.expected_features(cls)


def class_set_stats(
    matrix: ClassFeatureMatrix, classes: Sequence[str], name: str = ""
) -> ClassSet:
    """Count unique features of a class set and the fraction shared by two or more classes.

    The matrix is expected to be sub-feature expanded already.
    """
    if not classes:
        raise ValueError("class set must contain at least one class")
    rows = [matrix.expected_features(c) for c in classes]
    union = frozenset().union(*rows)
    shared = sum(1 for f in union if sum(f in r for r in rows) >= 2)
    ordered = tuple(c for c in matrix.classes if c in set(classes))
    return ClassSet(name=name, classes=ordered, parts=len(union), shared=shared)


def class_set_features(matrix: ClassFeatureMatrix, classes: ClassSet | Sequence[str]) -> tuple[str, ...]:
    """Union of the class rows, in vocabulary atomic order."""
    members = classes.classes if isinstance(classes, ClassSet) else tuple(classes)
    union = frozenset().union(*(matrix.expected_features(c) for c in members))
    order = list(matrix.vocab.atomic) + sorted(matrix.vocab.features)
    seen: list[str] = []
    for f in order:
        if f in union and f not in seen:
            seen.append(f)
    return tuple(seen)


def _line_of(text: str, token: str, last: bool = False) -> int | None:
    pattern = re.compile(re.escape(json.dumps(token)), re.IGNORECASE)
    hits = [i for i, line in enumerate(text.splitlines(), start=1) if pattern.search(line)]
    if not hits:
        return None
    return hits[-1] if last else hits[0]


def _pairs_no_dupes(text: str):
    def hook(pairs):
        seen = set()
        for k, _ in pairs:
            if k in seen:
                raise MatrixLoadError(f"duplicate key {k!r}", _line_of(text, k, last=True))
            seen.add(k)
        return dict(pairs)

    return hook


def load_matrix(path: str | Path | None = None) -> tuple[FeatureVocabulary, ClassFeatureMatrix]:
    """Read a class-feature matrix file; ``None`` loads the bundled one."""
    if path is None:
        text = resources.files("featalign.data").joinpath(BUNDLED_MATRIX).read_text()
    else:
        text = Path(path).read_text()
    try:
        doc = json.loads(text, object_pairs_hook=_pairs_no_dupes(text))
    except json.JSONDecodeError as exc:
        raise MatrixLoadError(exc.msg, exc.lineno) from None
    for key in ("features", "classes"):
        if key not in doc:
            raise MatrixLoadError(f"missing key {key!r}")

    names = [canonical(f) for f in doc["features"]]
    for raw, n in zip(doc["features"], names):
        if names.count(n) > 1:
            raise MatrixLoadError(f"duplicate feature {raw!r}", _line_of(text, raw, last=True))
    try:
        vocab = FeatureVocabulary(tuple(doc["features"]), doc.get("subfeatures", {}))
    except ValueError as exc:
        raise MatrixLoadError(str(exc)) from None

    rows: dict[str, FeatureSet] = {}
    for cls, feats in doc["classes"].items():
        for f in feats:
            if f not in vocab:
                raise MatrixLoadError(f"unknown feature {f!r} in class {cls!r}", _line_of(text, f))
        if not feats:
            raise MatrixLoadError(f"class {cls!r} has no features", _line_of(text, cls))
        rows[cls] = vocab.make_set(feats)

    class_sets = {}
    for name, members in doc.get("class_sets", {}).items():
        for c in members:
            if c not in rows:
                raise MatrixLoadError(f"class set {name!r} names unknown class {c!r}", _line_of(text, name))
        class_sets[name] = tuple(members)
    return vocab, ClassFeatureMatrix(vocab, tuple(rows), rows, class_sets)


def load_expanded(path: str | Path | None = None) -> ClassFeatureMatrix:
    return expand_subfeatures(load_matrix(path)[1])
