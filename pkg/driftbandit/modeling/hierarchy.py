"""Taxonomies of arms and the HMAB policies.

A taxonomy is a tree: the root carries no model, categories and items
(leaves) each own a NIG posterior.  A decision is a root-to-leaf path whose
score is the sum of the per-node scores below the root, and the observed
reward is credited to every non-root node on the path.
"""
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from driftbandit.errors import (
    CycleError,
    EmptyTaxonomyError,
    InvalidPathError,
    MultipleParentsError,
    MultipleRootsError,
    OrphanNodeError,
    UnknownArmError,
)
from driftbandit.modeling.bandit import ArmId, BanditPolicy, PathInteraction
from driftbandit.modeling.flat import FlatPolicyConfig, explores, node_scores
from driftbandit.modeling.nig import NigPosterior, nig_update
from driftbandit.utils import EXPLORE_LABEL, RandomStream, argmax_with_ties, check_finite_reward, context_vector

HMAB_KINDS = ("thompson", "linucb", "eps_greedy")


@dataclass(frozen=True)
class Taxonomy:
    nodes: frozenset
    children: Mapping[ArmId, Tuple[ArmId, ...]]
    root: ArmId

    @classmethod
    def from_edges(cls, edges: Iterable[Tuple[ArmId, ArmId]], validate: bool = True) -> "Taxonomy":
        """Build a taxonomy from ``(parent, child)`` pairs; the root is the node that is never a child."""
        edges = list(edges)
        if not edges:
            raise EmptyTaxonomyError("Taxonomy has no edges")
        nodes = frozenset(node for edge in edges for node in edge)
        children: Dict[ArmId, List[ArmId]] = {}
        for parent, child in edges:
            children.setdefault(parent, []).append(child)
        child_nodes = {child for _, child in edges}
        roots = sorted(nodes - child_nodes)
        taxonomy = cls(nodes, {parent: tuple(sorted(kids)) for parent, kids in children.items()},
                       roots[0] if len(roots) == 1 else None)
        if validate:
            validate_taxonomy(taxonomy)
        return taxonomy

    @classmethod
    def flat(cls, leaves: Sequence[ArmId], root: ArmId = "root") -> "Taxonomy":
        """Depth-1 taxonomy: every leaf hangs directly off the root."""
        return cls.from_edges((root, leaf) for leaf in leaves)

    @classmethod
    def balanced(cls, branching: int, depth: int, root: ArmId = "root") -> "Taxonomy":
        """Complete tree with ``branching**depth`` leaves named ``n00/n01/...``."""
        if branching < 1 or depth < 1:
            raise ValueError(f"Invalid balanced taxonomy: branching={branching}, depth={depth}")
        edges, frontier = [], [root]
        for _ in range(depth):
            next_frontier = []
            for parent in frontier:
                prefix = "" if parent == root else parent + "/"
                for i in range(branching):
                    child = f"{prefix}n{i:02d}"
                    edges.append((parent, child))
                    next_frontier.append(child)
            frontier = next_frontier
        return cls.from_edges(edges)

    def children_of(self, node: ArmId) -> Tuple[ArmId, ...]:
        return self.children.get(node, ())

    def parent_of(self, node: ArmId) -> Optional[ArmId]:
        for parent, kids in self.children.items():
            if node in kids:
                return parent
        return None

    @property
    def leaves(self) -> Tuple[ArmId, ...]:
        return tuple(sorted(node for node in self.nodes if not self.children_of(node) and node != self.root))

    @property
    def model_nodes(self) -> Tuple[ArmId, ...]:
        """Every node that owns a posterior (all but the root), sorted."""
        return tuple(sorted(self.nodes - {self.root}))

    def paths(self) -> List[Tuple[ArmId, ...]]:
        """All root-to-leaf paths in depth-first, sorted-child order."""
        paths, stack = [], [(self.root,)]
        while stack:
            path = stack.pop()
            kids = self.children_of(path[-1])
            if not kids:
                paths.append(path)
            stack.extend(path + (kid,) for kid in reversed(kids))
        return paths

    def path_to(self, leaf: ArmId) -> Tuple[ArmId, ...]:
        if leaf not in self.nodes:
            raise UnknownArmError(leaf, where="taxonomy")
        path = [leaf]
        while path[-1] != self.root:
            parent = self.parent_of(path[-1])
            if parent is None:
                raise InvalidPathError(f"Node {path[-1]!r} has no parent")
            path.append(parent)
        return tuple(reversed(path))

    @property
    def depth(self) -> int:
        return max(len(path) for path in self.paths()) - 1


def validate_taxonomy(t: Taxonomy) -> None:
    if not t.nodes:
        raise EmptyTaxonomyError("Taxonomy has no nodes")

    parents: Dict[ArmId, List[ArmId]] = {}
    for parent, kids in t.children.items():
        if parent not in t.nodes:
            raise OrphanNodeError(f"Parent {parent!r} is not a node of the taxonomy")
        for kid in kids:
            if kid not in t.nodes:
                raise OrphanNodeError(f"Child {kid!r} of {parent!r} is not a node of the taxonomy")
            parents.setdefault(kid, []).append(parent)

    for node, node_parents in sorted(parents.items()):
        if len(node_parents) > 1:
            raise MultipleParentsError(f"Node {node!r} has multiple parents: {sorted(node_parents)}")

    roots = sorted(node for node in t.nodes if node not in parents)
    if len(roots) > 1:
        raise MultipleRootsError(f"Taxonomy has multiple roots: {roots}")
    if not roots:
        raise CycleError("Taxonomy has no root: every node has a parent, so the edges contain a cycle")
    if t.root != roots[0]:
        raise MultipleRootsError(f"Declared root {t.root!r} differs from the parentless node {roots[0]!r}")
    if not t.children_of(t.root):
        raise EmptyTaxonomyError("Taxonomy root has no children, so there are no items")

    # depth-first from the root; with one parent per node, unreachable nodes sit on a cycle
    seen, stack = set(), [t.root]
    while stack:
        node = stack.pop()
        if node in seen:
            raise CycleError(f"Cycle through node {node!r}")
        seen.add(node)
        stack.extend(t.children_of(node))
    unreachable = sorted(t.nodes - seen)
    if unreachable:
        raise CycleError(f"Nodes unreachable from root {t.root!r} form a cycle: {unreachable}")


@dataclass(frozen=True)
class PathSelection:
    path: Tuple[ArmId, ...]
    leaf: ArmId
    score: float


def check_path(t: Taxonomy, path: Sequence[ArmId]) -> Tuple[ArmId, ...]:
    path = tuple(path)
    if not path or path[0] != t.root:
        raise InvalidPathError(f"Path {list(path)} does not start at root {t.root!r}")
    for parent, child in zip(path, path[1:]):
        if child not in t.children_of(parent):
            raise InvalidPathError(f"{child!r} is not a child of {parent!r}")
    if t.children_of(path[-1]) or len(path) == 1:
        raise InvalidPathError(f"Path {list(path)} does not end at a leaf")
    return path


def path_score(t: Taxonomy, path, x, evaluate: Callable[[ArmId, object], float]) -> float:
    """Sum of ``evaluate(node, x)`` over the nodes chosen below the root."""
    nodes = check_path(t, getattr(path, "path", path))
    return sum(float(evaluate(node, x)) for node in nodes[1:])


def hmab_select(t: Taxonomy, posteriors: Mapping[ArmId, NigPosterior], x, policy: FlatPolicyConfig,
                rng: RandomStream) -> PathSelection:
    """Score every root-to-leaf path and return the best one; ties go to the smallest leaf id."""
    if not t.nodes or not t.children_of(t.root):
        raise EmptyTaxonomyError("Cannot select from an empty taxonomy")
    if policy.kind not in HMAB_KINDS:
        raise ValueError(f"Invalid HMAB policy kind {policy.kind!r}, expected one of {HMAB_KINDS}")
    ids = t.model_nodes
    x = context_vector(x, posteriors[ids[0]].d)
    leaves = t.leaves

    explore_rng = rng.child(EXPLORE_LABEL)
    exploring = explores(policy, explore_rng)
    if exploring:
        explored_leaf = leaves[explore_rng.integers(len(leaves))]

    scores = node_scores(policy, posteriors, ids, x, rng)
    path_scores = {path[-1]: path_score(t, path, x, lambda node, _: scores[node]) for path in t.paths()}
    if exploring:
        leaf = explored_leaf
    else:
        leaf, _ = argmax_with_ties(leaves, [path_scores[leaf] for leaf in leaves])
    return PathSelection(t.path_to(leaf), leaf, path_scores[leaf])


def hmab_update(t: Taxonomy, posteriors: Dict[ArmId, NigPosterior], path, x, r) -> None:
    """Apply the conjugate update to every non-root node on ``path`` in place."""
    nodes = check_path(t, getattr(path, "path", path))
    r = check_finite_reward(r)
    updated = {node: nig_update(posteriors[node], x, r) for node in nodes[1:]}
    posteriors.update(updated)


class HmabPolicy(BanditPolicy):
    """HMAB-TS, HMAB-LinUCB or HMAB-eps-greedy over a taxonomy."""

    def __init__(self, taxonomy: Taxonomy, d: int, config: Optional[FlatPolicyConfig] = None, seed: int = 0):
        super().__init__(taxonomy.leaves, d, seed=seed)
        self.taxonomy = taxonomy
        self.config = config or FlatPolicyConfig()
        if self.config.kind not in HMAB_KINDS:
            raise ValueError(f"Invalid HMAB policy kind {self.config.kind!r}, expected one of {HMAB_KINDS}")
        self.name = f"hmab_{self.config.kind}"
        self.posteriors: Dict[ArmId, NigPosterior] = {node: self.config.prior(self.d) for node in taxonomy.model_nodes}

    def select(self, context, rng: Optional[RandomStream] = None) -> PathSelection:
        return hmab_select(self.taxonomy, self.posteriors, context, self.config, self._select_stream(rng))

    def interaction_for(self, t: int, context, selection, reward) -> PathInteraction:
        path = getattr(selection, "path", None) or self.taxonomy.path_to(selection)
        return PathInteraction(t=t, context=context_vector(context, self.d), chosen=path[-1],
                               reward=check_finite_reward(reward), path=tuple(path))

    def update(self, interaction: PathInteraction, rng: Optional[RandomStream] = None) -> None:
        self.arm_index(interaction.chosen)
        path = getattr(interaction, "path", None) or self.taxonomy.path_to(interaction.chosen)
        if path[-1] != interaction.chosen:
            raise InvalidPathError(f"Path {list(path)} does not end at the credited leaf {interaction.chosen!r}")
        posteriors = dict(self.posteriors)
        hmab_update(self.taxonomy, posteriors, path, interaction.context, interaction.reward)
        self._record(interaction)
        self.posteriors = posteriors
