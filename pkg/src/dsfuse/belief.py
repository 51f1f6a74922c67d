"""Finite-frame belief-function algebra.

Frames of discernment, mass functions over subset bitmasks, Dempster's rule,
refinings between frames, vacuous extension, belief/plausibility, and the
pignistic transform used for decision making.

Subsets are index bitmasks over a frame's ordered class list, so intersection
and union in the combination loop are single integer operations. All types are
immutable after construction; every operation here is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .errors import (
    EmptyFocal,
    FrameMismatch,
    NegativeMass,
    NotAPartition,
    NotNormalized,
    TotalConflict,
    UnknownClass,
)

#: Construction-time tolerance on sum(masses) == 1.
NORM_TOL = 1e-9
#: Dempster denominators at or below this raise TotalConflict.
CONFLICT_TOL = 1e-12
#: Default cap on frame size; keeps masks cheap in the fusion hot loop.
MAX_FRAME_CLASSES = 256


@dataclass(frozen=True)
class Frame:
    """An ordered, exhaustive set of mutually exclusive class names."""

    id: str
    classes: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.classes:
            raise ValueError(f"frame {self.id!r}: class list is empty")
        if len(self.classes) > MAX_FRAME_CLASSES:
            raise ValueError(
                f"frame {self.id!r}: {len(self.classes)} classes exceeds the "
                f"cap of {MAX_FRAME_CLASSES}")
        index = {}
        for i, name in enumerate(self.classes):
            if name in index:
                raise ValueError(f"frame {self.id!r}: duplicate class {name!r}")
            index[name] = i
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.classes)

    @property
    def full_mask(self) -> int:
        return (1 << len(self.classes)) - 1

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownClass(f"frame {self.id!r} has no class {name!r}") from None

    def subset(self, names: Iterable[str]) -> "ClassSubset":
        mask = 0
        for name in names:
            mask |= 1 << self.index(name)
        return ClassSubset(self, mask)

    def singleton(self, name: str) -> "ClassSubset":
        return ClassSubset(self, 1 << self.index(name))

    def full_subset(self) -> "ClassSubset":
        return ClassSubset(self, self.full_mask)

    def names_of_mask(self, mask: int) -> tuple[str, ...]:
        return tuple(c for i, c in enumerate(self.classes) if mask >> i & 1)


def make_frame(id: str, classes: Iterable[str]) -> Frame:
    return Frame(id, tuple(classes))


@dataclass(frozen=True)
class ClassSubset:
    """A subset of a frame's classes, stored as an index bitmask."""

    frame: Frame
    mask: int

    def __post_init__(self):
        if self.mask < 0 or self.mask > self.frame.full_mask:
            raise ValueError(
                f"mask {self.mask:#x} out of range for frame {self.frame.id!r}")

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __iter__(self) -> Iterator[int]:
        mask = self.mask
        while mask:
            low = mask & -mask
            yield low.bit_length() - 1
            mask ^= low

    def __contains__(self, class_index: int) -> bool:
        return bool(self.mask >> class_index & 1)

    @property
    def is_empty(self) -> bool:
        return self.mask == 0

    @property
    def names(self) -> tuple[str, ...]:
        return self.frame.names_of_mask(self.mask)

    def union(self, other: "ClassSubset") -> "ClassSubset":
        _check_same_frame(self.frame, other.frame)
        return ClassSubset(self.frame, self.mask | other.mask)

    def intersection(self, other: "ClassSubset") -> "ClassSubset":
        _check_same_frame(self.frame, other.frame)
        return ClassSubset(self.frame, self.mask & other.mask)

    def issubset(self, other: "ClassSubset") -> bool:
        _check_same_frame(self.frame, other.frame)
        return self.mask & ~other.mask == 0

    def __str__(self) -> str:
        return "{" + ",".join(self.names) + "}"


def _check_same_frame(f1: Frame, f2: Frame) -> None:
    if f1 is not f2 and (f1.id != f2.id or f1.classes != f2.classes):
        raise FrameMismatch(f"frames {f1.id!r} and {f2.id!r} differ")


def _as_mask(frame: Frame, subset) -> int:
    """Accept a ClassSubset, a raw bitmask, or an iterable of class names."""
    if isinstance(subset, ClassSubset):
        _check_same_frame(frame, subset.frame)
        return subset.mask
    if isinstance(subset, int):
        if subset < 0 or subset > frame.full_mask:
            raise ValueError(f"mask {subset:#x} out of range for frame {frame.id!r}")
        return subset
    return frame.subset(subset).mask


class MassFunction:
    """A normalized mass function: focal subsets of a frame mapped to masses.

    Invariants enforced at construction: no mass on the empty set, all masses
    non-negative, masses sum to 1 within NORM_TOL, and no zero-mass entries
    are kept. Instances are immutable.
    """

    __slots__ = ("frame", "_focal")

    def __init__(self, frame: Frame, focal: Mapping[int, float]):
        total = 0.0
        cleaned: dict[int, float] = {}
        for mask, mass in focal.items():
            if mass < 0.0:
                raise NegativeMass(
                    f"mass {mass} on {frame.names_of_mask(mask)} is negative")
            if mask == 0:
                if mass > 0.0:
                    raise EmptyFocal(f"empty set carries mass {mass}")
                continue
            total += mass
            if mass > 0.0:
                cleaned[mask] = cleaned.get(mask, 0.0) + mass
        if abs(total - 1.0) > NORM_TOL:
            raise NotNormalized(f"masses sum to {total!r}, not 1")
        self.frame = frame
        self._focal = cleaned

    def mass(self, subset) -> float:
        """Mass of an arbitrary subset (0 if it is not focal)."""
        return self._focal.get(_as_mask(self.frame, subset), 0.0)

    def focal_sets(self) -> list[ClassSubset]:
        return [ClassSubset(self.frame, m) for m in sorted(self._focal)]

    def items(self) -> list[tuple[ClassSubset, float]]:
        return [(ClassSubset(self.frame, m), v) for m, v in sorted(self._focal.items())]

    def mask_items(self) -> list[tuple[int, float]]:
        """(bitmask, mass) pairs in canonical (sorted-mask) order."""
        return sorted(self._focal.items())

    def is_bayesian(self) -> bool:
        return all(m.bit_count() == 1 for m in self._focal)

    def is_vacuous(self) -> bool:
        return set(self._focal) == {self.frame.full_mask}

    def __eq__(self, other) -> bool:
        return (isinstance(other, MassFunction)
                and self.frame.classes == other.frame.classes
                and self._focal == other._focal)

    def __repr__(self) -> str:
        parts = ", ".join(
            f"{ClassSubset(self.frame, m)}: {v:.6g}" for m, v in sorted(self._focal.items()))
        return f"MassFunction({self.frame.id!r}, {parts})"


def make_mass(frame: Frame, assignments: Iterable[tuple[object, float]]) -> MassFunction:
    """Build a mass function from (subset, mass) pairs.

    Duplicate subsets are merged by summation. The input must already be
    normalized: a sum off 1 by more than NORM_TOL raises NotNormalized
    rather than being silently rescaled, since that would mask upstream bugs.
    """
    focal: dict[int, float] = {}
    for subset, mass in assignments:
        mask = _as_mask(frame, subset)
        if mass < 0.0:
            raise NegativeMass(f"mass {mass} on {frame.names_of_mask(mask)} is negative")
        if mask == 0 and mass > 0.0:
            raise EmptyFocal(f"empty set carries mass {mass}")
        focal[mask] = focal.get(mask, 0.0) + mass
    return MassFunction(frame, focal)


def vacuous_mass(frame: Frame) -> MassFunction:
    """Total ignorance: all mass on the full frame."""
    return MassFunction(frame, {frame.full_mask: 1.0})


def bayesian_mass(frame: Frame, probs: Iterable[float]) -> MassFunction:
    """Mass function with singleton focal sets carrying the given probabilities."""
    return MassFunction(frame, {1 << i: float(p) for i, p in enumerate(probs)})


def combine(m1: MassFunction, m2: MassFunction) -> MassFunction:
    """Dempster's rule: conjunctive combination with renormalization.

    The mass of A is proportional to the sum of m1(B)*m2(C) over pairs with
    B & C == A, renormalized over non-empty intersections. Commutative and
    associative; the vacuous mass function is the neutral element.

    Raises TotalConflict when the normalization constant is <= CONFLICT_TOL.
    """
    _check_same_frame(m1.frame, m2.frame)
    acc: dict[int, float] = {}
    for b, mb in m1._focal.items():
        for c, mc in m2._focal.items():
            inter = b & c
            if inter:
                prod = mb * mc
                acc[inter] = acc.get(inter, 0.0) + prod
    denom = sum(acc.values())
    if denom <= CONFLICT_TOL:
        raise TotalConflict(
            f"combination on frame {m1.frame.id!r} is totally conflicting "
            f"(denominator {denom!r})")
    return MassFunction(m1.frame, {mask: v / denom for mask, v in acc.items()})


def conflict_degree(m1: MassFunction, m2: MassFunction) -> float:
    """Total mass the conjunctive product assigns to empty intersections."""
    _check_same_frame(m1.frame, m2.frame)
    agree = 0.0
    for b, mb in m1._focal.items():
        for c, mc in m2._focal.items():
            if b & c:
                agree += mb * mc
    return min(max(1.0 - agree, 0.0), 1.0)


@dataclass(frozen=True)
class Refining:
    """A mapping from a coarse frame into a partition of a finer frame.

    ``images[i]`` is the bitmask of the target classes that source class i
    splits into; the images are pairwise disjoint, non-empty, and cover the
    target frame.
    """

    source: Frame
    target: Frame
    images: tuple[int, ...]

    def image_mask(self, source_mask: int) -> int:
        """rho(A) as the union of the per-class images over A's members."""
        out = 0
        mask = source_mask
        while mask:
            low = mask & -mask
            out |= self.images[low.bit_length() - 1]
            mask ^= low
        return out

    def image(self, subset: ClassSubset) -> ClassSubset:
        _check_same_frame(self.source, subset.frame)
        return ClassSubset(self.target, self.image_mask(subset.mask))


def make_refining(source: Frame, target: Frame, image_map: Mapping[str, object]) -> Refining:
    """Validate and build a refining from per-source-class target subsets.

    ``image_map`` maps every source class name to a subset of the target
    frame (ClassSubset, bitmask, or iterable of names). Raises NotAPartition
    naming the offending classes when the images overlap, leave a gap, or
    are empty.
    """
    images = []
    for name in source.classes:
        if name not in image_map:
            raise NotAPartition(f"refining {source.id!r}->{target.id!r}: "
                                f"no image given for class {name!r}")
        mask = _as_mask(target, image_map[name])
        if mask == 0:
            raise NotAPartition(f"refining {source.id!r}->{target.id!r}: "
                                f"image of {name!r} is empty")
        images.append(mask)
    seen = 0
    for name, mask in zip(source.classes, images):
        overlap = seen & mask
        if overlap:
            clashing = [c for c, m in zip(source.classes, images)
                        if m & overlap and c != name]
            raise NotAPartition(
                f"refining {source.id!r}->{target.id!r}: image of {name!r} "
                f"overlaps {clashing} on {target.names_of_mask(overlap)}")
        seen |= mask
    if seen != target.full_mask:
        missing = target.names_of_mask(target.full_mask & ~seen)
        raise NotAPartition(f"refining {source.id!r}->{target.id!r}: "
                            f"images do not cover {missing}")
    return Refining(source, target, tuple(images))


def identity_refining(frame: Frame) -> Refining:
    return Refining(frame, frame, tuple(1 << i for i in range(frame.size)))


def vacuous_extend(m: MassFunction, rho: Refining) -> MassFunction:
    """Re-express a mass function on the refined frame via rho.

    Each focal set A keeps its mass on rho(A); total mass is preserved.
    """
    _check_same_frame(m.frame, rho.source)
    out: dict[int, float] = {}
    for mask, mass in m._focal.items():
        big = rho.image_mask(mask)
        out[big] = out.get(big, 0.0) + mass
    return MassFunction(rho.target, out)


@dataclass(frozen=True)
class PignisticDistribution:
    """Per-class probabilities obtained by the pignistic transform."""

    frame: Frame
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.probs) != self.frame.size:
            raise ValueError("probability vector length does not match frame size")
        if any(p < 0.0 for p in self.probs):
            raise ValueError("pignistic probabilities must be non-negative")
        if abs(sum(self.probs) - 1.0) > NORM_TOL:
            raise NotNormalized(f"pignistic probabilities sum to {sum(self.probs)!r}")

    def prob(self, name: str) -> float:
        return self.probs[self.frame.index(name)]


def pignistic(m: MassFunction) -> PignisticDistribution:
    """BetP(w) = sum over focal sets A containing w of m(A)/|A|."""
    probs = [0.0] * m.frame.size
    for mask, mass in m._focal.items():
        share = mass / mask.bit_count()
        sub = mask
        while sub:
            low = sub & -sub
            probs[low.bit_length() - 1] += share
            sub ^= low
    return PignisticDistribution(m.frame, tuple(probs))


def decide(betp: PignisticDistribution) -> int:
    """Index of the maximal pignistic probability; ties go to the lowest index."""
    best, best_p = 0, betp.probs[0]
    for i, p in enumerate(betp.probs):
        if p > best_p:
            best, best_p = i, p
    return best


def belief(m: MassFunction, subset) -> float:
    """bel(A) = sum of m(B) over focal B contained in A."""
    mask = _as_mask(m.frame, subset)
    return sum(v for b, v in m._focal.items() if b & ~mask == 0)


def plausibility(m: MassFunction, subset) -> float:
    """pl(A) = sum of m(B) over focal B intersecting A."""
    mask = _as_mask(m.frame, subset)
    return sum(v for b, v in m._focal.items() if b & mask)
