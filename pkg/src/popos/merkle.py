"""Degree-d Merkle trees, inclusion proofs and Merkle mountain ranges.

Hash inputs are domain separated: ``0x00`` for leaves, ``0x01`` for internal
nodes and ``0x02`` for the mountain range root.  A tree whose leaf count is not
a power of its degree is padded with :data:`SENTINEL` leaf digests.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

from .crypto import HASH_SIZE, Digest, hash_bytes

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"
MMR_PREFIX = b"\x02"

#: Digest of padding leaves; its preimage is not a valid leaf encoding.
SENTINEL: Digest = hash_bytes(b"\x03popos/padding")


def leaf_digest(data: bytes) -> Digest:
    return hashlib.sha256(LEAF_PREFIX + data).digest()


def node_digest(children: Sequence[bytes]) -> Digest:
    return hashlib.sha256(NODE_PREFIX + b"".join(children)).digest()


def tree_depth(size: int, d: int) -> int:
    """Smallest ``k`` with ``d**k >= size``, i.e. ceil(log_d(size))."""
    if size < 1:
        raise ValueError("size must be positive")
    depth, cap = 0, 1
    while cap < size:
        cap *= d
        depth += 1
    return depth


class MerkleTree:
    """Immutable degree-``d`` Merkle tree.

    ``levels[0]`` holds the (padded) leaf digests and ``levels[depth]`` the
    root.
    """

    def __init__(self, leaf_digests: Sequence[Digest], d: int = 2):
        if d < 2:
            raise ValueError("tree degree must be at least 2")
        if not leaf_digests:
            raise ValueError("cannot build a tree without leaves")
        self.degree = d
        self.size = len(leaf_digests)
        self.depth = tree_depth(self.size, d)
        level = list(leaf_digests)
        level.extend([SENTINEL] * (d**self.depth - self.size))
        self.levels = [level]
        sha = hashlib.sha256
        for _ in range(self.depth):
            level = [
                sha(NODE_PREFIX + b"".join(level[k : k + d])).digest()
                for k in range(0, len(level), d)
            ]
            self.levels.append(level)
        self.root: Digest = self.levels[-1][0]

    @classmethod
    def from_leaves(cls, leaves: Sequence[bytes], d: int = 2) -> MerkleTree:
        return cls([leaf_digest(x) for x in leaves], d)

    @property
    def capacity(self) -> int:
        return self.degree**self.depth

    def leaf(self, i: int) -> Digest:
        return self.levels[0][i]

    def _node_index(self, path: Sequence[int]) -> int:
        if len(path) > self.depth:
            raise IndexError(f"path of length {len(path)} exceeds depth {self.depth}")
        idx = 0
        for c in path:
            if not 0 <= c < self.degree:
                raise IndexError(f"child index {c} out of range for degree {self.degree}")
            idx = idx * self.degree + c
        return idx

    def node(self, path: Sequence[int]) -> Digest:
        return self.levels[self.depth - len(path)][self._node_index(path)]

    def children(self, path: Sequence[int]) -> list[Digest]:
        if len(path) >= self.depth:
            raise IndexError("path addresses a leaf, which has no children")
        idx = self._node_index(path)
        level = self.levels[self.depth - len(path) - 1]
        return level[idx * self.degree : (idx + 1) * self.degree]

    def __repr__(self) -> str:
        return f"MerkleTree(size={self.size}, degree={self.degree}, root={self.root.hex()[:16]}..)"


def make_tree(leaves: Sequence[bytes], d: int = 2) -> MerkleTree:
    """Build a tree whose leaf digests are ``H(0x00 || leaf)``."""
    if d < 2:
        raise ValueError("tree degree must be at least 2")
    return MerkleTree.from_leaves(leaves, d)


def children(tree: MerkleTree, node_path: Sequence[int]) -> list[Digest]:
    return tree.children(node_path)


@dataclass(frozen=True)
class MerkleProof:
    index: int
    size: int
    degree: int
    siblings: tuple[tuple[Digest, ...], ...]

    @property
    def depth(self) -> int:
        return len(self.siblings)


def prove(tree: MerkleTree, i: int) -> MerkleProof:
    if not 0 <= i < tree.size:
        raise IndexError(f"leaf {i} out of range for tree of size {tree.size}")
    d = tree.degree
    groups = []
    pos = i
    for level in tree.levels[:-1]:
        start = (pos // d) * d
        k = pos - start
        group = level[start : start + d]
        groups.append(tuple(group[:k] + group[k + 1 :]))
        pos //= d
    return MerkleProof(i, tree.size, d, tuple(groups))


def root_from_proof(proof: MerkleProof, leaf: Digest) -> Digest | None:
    """Fold ``leaf`` up through ``proof``; None when the proof is malformed."""
    d = proof.degree
    if d < 2 or not 0 <= proof.index < proof.size:
        return None
    if proof.depth != tree_depth(proof.size, d):
        return None
    h = leaf
    pos = proof.index
    for group in proof.siblings:
        if len(group) != d - 1 or any(len(g) != HASH_SIZE for g in group):
            return None
        k = pos % d
        h = node_digest(group[:k] + (h,) + group[k:])
        pos //= d
    return h


def verify_digest(
    proof: MerkleProof, root: Digest, size: int, i: int, leaf: Digest, degree: int | None = None
) -> bool:
    if proof.size != size or proof.index != i:
        return False
    if degree is not None and proof.degree != degree:
        return False
    return root_from_proof(proof, leaf) == root


def padding_digest(height: int, d: int) -> Digest:
    """Root of a subtree of the given height that holds only padding."""
    h = SENTINEL
    for _ in range(height):
        h = node_digest([h] * d)
    return h


def is_last_leaf(proof: MerkleProof) -> bool:
    """True when everything to the right of ``proof.index`` is padding.

    The declared ``size`` of a proof is not bound to the root, so a proof
    alone cannot show that a leaf is the last one; the right-hand siblings can.
    """
    d = proof.degree
    pos = proof.index
    for height, group in enumerate(proof.siblings):
        k = pos % d
        pad = padding_digest(height, d)
        if any(g != pad for g in group[k:]):
            return False
        pos //= d
    return True


def verify_proof(
    proof: MerkleProof, root: Digest, size: int, i: int, leaf_bytes: bytes, degree: int | None = None
) -> bool:
    """Check that ``leaf_bytes`` sits at index ``i`` of the size-``size`` tree with ``root``."""
    return verify_digest(proof, root, size, i, leaf_digest(leaf_bytes), degree)


# -- mountain ranges ---------------------------------------------------------


def decompose(n: int) -> list[int]:
    """Tree sizes of an ``n``-leaf mountain range, largest first."""
    if n < 1:
        raise ValueError("mountain range needs at least one leaf")
    return [1 << q for q in range(n.bit_length() - 1, -1, -1) if n >> q & 1]


def mmr_locate(n: int, global_leaf: int) -> tuple[int, int]:
    """Map a global leaf index to ``(tree index, local leaf index)``."""
    if not 0 <= global_leaf < n:
        raise IndexError(f"leaf {global_leaf} out of range for {n} leaves")
    offset = 0
    for t, size in enumerate(decompose(n)):
        if global_leaf < offset + size:
            return t, global_leaf - offset
        offset += size
    raise AssertionError("unreachable")


def mmr_offsets(n: int) -> list[int]:
    offsets, acc = [], 0
    for size in decompose(n):
        offsets.append(acc)
        acc += size
    return offsets


def mmr_global(n: int, tree_index: int, local: int) -> int:
    sizes = decompose(n)
    if not 0 <= tree_index < len(sizes) or not 0 <= local < sizes[tree_index]:
        raise IndexError("position outside the mountain range")
    return mmr_offsets(n)[tree_index] + local


class MountainRange:
    def __init__(self, leaf_digests: Sequence[Digest], d: int = 2):
        if not leaf_digests:
            raise ValueError("cannot build a mountain range without leaves")
        self.n = len(leaf_digests)
        self.degree = d
        self.sizes = decompose(self.n)
        self.offsets = mmr_offsets(self.n)
        self.trees = [
            MerkleTree(leaf_digests[off : off + size], d) for off, size in zip(self.offsets, self.sizes)
        ]

    @classmethod
    def from_leaves(cls, leaves: Sequence[bytes], d: int = 2) -> MountainRange:
        return cls([leaf_digest(x) for x in leaves], d)

    @property
    def peaks(self) -> list[Digest]:
        return [t.root for t in self.trees]

    def locate(self, global_leaf: int) -> tuple[int, int]:
        return mmr_locate(self.n, global_leaf)

    def leaf(self, global_leaf: int) -> Digest:
        t, local = self.locate(global_leaf)
        return self.trees[t].leaf(local)

    def prove(self, global_leaf: int) -> tuple[int, MerkleProof]:
        t, local = self.locate(global_leaf)
        return t, prove(self.trees[t], local)


def make_mmr(leaves: Sequence[bytes], d: int = 2) -> MountainRange:
    return MountainRange.from_leaves(leaves, d)


def mmr_root(mr: MountainRange | Sequence[Digest]) -> Digest:
    peaks = mr.peaks if isinstance(mr, MountainRange) else list(mr)
    return hash_bytes(MMR_PREFIX + b"".join(peaks))
