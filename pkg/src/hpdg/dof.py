"""Global DOF mapping and its three-stage adaptation transaction.

Stage 1 (:func:`begin_adapt`) continues the old mapping onto the union of
old and new DOF sets by appending fresh indices past the current end.
Stage 2 is the data projection, performed by the caller. Stage 3
(:meth:`AdaptationTransaction.commit`) compacts the index range: indices
below the new size are kept, the surviving indices above it are moved
into the freed holes, both lists taken in ascending order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Optional

import numpy as np


class TransactionError(RuntimeError):
    """Misuse of the adaptation transaction protocol."""


class DofMapper:
    """Injective map ``(element, local index) -> global index``.

    Outside a transaction the image is exactly ``0 .. size - 1``.
    """

    def __init__(self, blocks: Mapping[Hashable, np.ndarray]):
        self._blocks = {e: np.asarray(ix, dtype=np.int64) for e, ix in blocks.items()}
        for ix in self._blocks.values():
            ix.flags.writeable = False
        self.size = int(sum(len(ix) for ix in self._blocks.values()))
        self.transaction: Optional[AdaptationTransaction] = None

    @classmethod
    def fresh(cls, sizes: Mapping[Hashable, int]) -> "DofMapper":
        """Consecutive enumeration in the iteration order of ``sizes``."""
        blocks = {}
        base = 0
        for e, n in sizes.items():
            blocks[e] = np.arange(base, base + int(n), dtype=np.int64)
            base += int(n)
        return cls(blocks)

    def indices(self, element) -> np.ndarray:
        return self._blocks[element]

    def __call__(self, element, i: int) -> int:
        return int(self._blocks[element][i])

    def block_size(self, element) -> int:
        return len(self._blocks[element])

    def elements(self):
        return self._blocks.keys()

    def items(self):
        return self._blocks.items()

    def __contains__(self, element) -> bool:
        return element in self._blocks

    def __len__(self) -> int:
        return len(self._blocks)

    def as_dict(self) -> dict:
        return {e: tuple(int(i) for i in ix) for e, ix in self._blocks.items()}

    def check(self) -> None:
        """Raise if the image is not exactly ``0 .. size - 1``."""
        if not self._blocks:
            if self.size:
                raise AssertionError("empty mapper with nonzero size")
            return
        image = np.sort(np.concatenate(list(self._blocks.values())))
        if not np.array_equal(image, np.arange(self.size)):
            raise AssertionError("DOF mapping is not a bijection onto 0..N-1")


@dataclass
class ElementChange:
    """Per-element record of a transaction.

    ``origin`` are the element's indices under the old mapping (empty for
    elements that did not exist before); ``destination`` are its
    continuation indices ``mu^(m+1/2)(E, i)``, ``i < n_E^(m+1)``.
    """

    element: Hashable
    origin: np.ndarray
    destination: np.ndarray


@dataclass
class AdaptationTransaction:
    mapper: DofMapper
    old_size: int
    half_size: int
    new_size: int
    continuation: dict
    new_sizes: dict
    changes: list = field(default_factory=list)
    removed: list = field(default_factory=list)
    phase: str = "open"
    relocations: list = field(default_factory=list)

    @property
    def holes(self) -> list[int]:
        """Indices below the new size not used by the new DOF set (pending holes)."""
        used = np.zeros(self.new_size, dtype=bool)
        for e, n in self.new_sizes.items():
            ix = self.continuation[e][:n]
            used[ix[ix < self.new_size]] = True
        return [int(i) for i in np.flatnonzero(~used)]

    def mark_projected(self) -> None:
        if self.phase != "open":
            raise TransactionError(f"transaction already {self.phase}")
        self.phase = "projected"

    def commit(self, require_projected: bool = True) -> DofMapper:
        """Compact the index range and install the new mapping.

        Fills ``self.relocations`` with ``(from, to)`` index pairs; DOF
        storage must apply them before being truncated to ``new_size``.
        """
        if self.phase == "committed":
            raise TransactionError("transaction already committed")
        if require_projected and self.phase != "projected":
            raise TransactionError("commit called before the data projections were flushed")
        n_new = self.new_size
        holes = self.holes
        movers = sorted(int(i) for e, n in self.new_sizes.items()
                        for i in self.continuation[e][:n] if i >= n_new)
        if len(movers) != len(holes):
            raise AssertionError("hole count does not match relocated DOF count")
        target = dict(zip(movers, holes))
        blocks = {}
        for e, n in self.new_sizes.items():
            ix = self.continuation[e][:n].copy()
            for j in np.flatnonzero(ix >= n_new):
                ix[j] = target[int(ix[j])]
            blocks[e] = ix
        self.relocations = list(zip(movers, holes))
        new = DofMapper(blocks)
        self.mapper.transaction = None
        self.phase = "committed"
        self.result = new
        return new


def begin_adapt(mapper: DofMapper, new_sizes: Mapping[Hashable, int],
                changed: Iterable[Hashable] = ()) -> AdaptationTransaction:
    """Stage 1: continue ``mapper`` onto the union of old and new DOF sets.

    ``new_sizes`` lists every element of the new grid with its block size,
    in leaf order; elements of the old grid missing from it are removed.
    ``changed`` names surviving elements whose local space changed without a
    size change (e.g. swapped anisotropic degrees). New indices are appended
    in the order of ``new_sizes``, then by local index.
    """
    if mapper.transaction is not None:
        raise TransactionError("mapper is already inside a transaction")
    changed = set(changed)
    for e in changed:
        if e not in mapper:
            raise KeyError(f"unknown element {e!r}")
    nxt = mapper.size
    continuation = {}
    changes = []
    for e, n in new_sizes.items():
        n = int(n)
        if e in mapper:
            old = mapper.indices(e)
            if n > len(old):
                ix = np.concatenate([old, np.arange(nxt, nxt + n - len(old), dtype=np.int64)])
                nxt += n - len(old)
            else:
                ix = old
            continuation[e] = ix
            if n != len(old) or e in changed:
                changes.append(ElementChange(e, old, ix[:n]))
        else:
            ix = np.arange(nxt, nxt + n, dtype=np.int64)
            nxt += n
            continuation[e] = ix
            changes.append(ElementChange(e, np.empty(0, dtype=np.int64), ix))
    removed = [e for e in mapper.elements() if e not in new_sizes]
    for e in removed:
        continuation[e] = mapper.indices(e)
    tx = AdaptationTransaction(
        mapper=mapper,
        old_size=mapper.size,
        half_size=nxt,
        new_size=int(sum(int(n) for n in new_sizes.values())),
        continuation=continuation,
        new_sizes={e: int(n) for e, n in new_sizes.items()},
        changes=changes,
        removed=removed,
    )
    mapper.transaction = tx
    return tx


def fresh_enumeration(leaf_ids: Iterable[Hashable], sizes: Mapping[Hashable, int]) -> DofMapper:
    """``mu_E(i) = sum_{E' < E} n_E' + i`` over the given leaf order."""
    return DofMapper.fresh({e: sizes[e] for e in leaf_ids})
