import logging
import math
from dataclasses import dataclass, field

from django.db import models

from config.exceptions import (
    ConfigurationError, InvariantViolation, OperationNotFound,
)

logger = logging.getLogger(__name__)


# ============= CATALOGUE DES OPÉRATIONS =============

class OperationKind(models.IntegerChoices):
    """Les 9 opérations candidates ; l'entier est l'indice stable de sérialisation"""
    MAX_POOL_3X3 = 0, 'max_pool_3x3'
    AVG_POOL_3X3 = 1, 'avg_pool_3x3'
    SKIP_CONNECT = 2, 'skip_connect'
    DIL_CONV_3X3 = 3, 'dil_conv_3x3'
    DIL_CONV_5X5 = 4, 'dil_conv_5x5'
    SEP_CONV_3X3 = 5, 'sep_conv_3x3'
    SEP_CONV_5X5 = 6, 'sep_conv_5x5'
    GABOR_3X3 = 7, 'gabor_3x3'
    DENOISE = 8, 'denoise'

    @classmethod
    def from_name(cls, name):
        for kind in cls:
            if kind.label == name:
                return kind
        raise OperationNotFound(f"Unknown operation '{name}'")


FULL_CATALOG = tuple(OperationKind)


# ============= ARÊTES, ESPACE, GÉNOTYPE =============

@dataclass(frozen=True, order=True)
class EdgeId:
    """Arête (i, j) d'une cellule ; le noeud 0 est l'entrée B0"""
    cell: int
    from_node: int
    to_node: int

    def __post_init__(self):
        if self.cell < 0:
            raise ConfigurationError(f"Negative cell index {self.cell}")
        if not 0 <= self.from_node < self.to_node:
            raise ConfigurationError(
                f"Edge ({self.from_node}, {self.to_node}) violates 0 <= i < j"
            )

    def __str__(self):
        return f"c{self.cell}:{self.from_node}->{self.to_node}"


def cell_edges(cell, nodes):
    """Toutes les arêtes d'une cellule à M noeuds intermédiaires, M(M+1)/2 au total"""
    return [
        EdgeId(cell, i, j)
        for i in range(nodes)
        for j in range(i + 1, nodes + 1)
    ]


def cell_schedule(nodes):
    """
    Ordre d'évaluation d'une cellule : par noeud cible puis par noeud source.
    Toutes les arêtes entrantes d'un noeud précèdent celles qui le lisent.
    """
    return [(i, j) for j in range(1, nodes + 1) for i in range(j)]


@dataclass(frozen=True)
class SearchSpace:
    """
    Instantané immuable de l'espace : un ensemble candidat ordonné par arête.
    L'élagage produit un nouvel instantané ; le dictionnaire n'est jamais muté.
    """
    cells: int
    nodes: int
    candidates: dict = field(default_factory=dict)
    reduction_cells: tuple = ()

    @property
    def edges(self):
        return sorted(self.candidates)

    @property
    def edge_count(self):
        return len(self.candidates)

    def candidates_for(self, edge):
        try:
            return self.candidates[edge]
        except KeyError:
            raise OperationNotFound(f"Edge {edge} is not part of the search space")

    @property
    def cardinality(self):
        """Cardinalité commune K des ensembles candidats"""
        sizes = {len(ops) for ops in self.candidates.values()}
        if len(sizes) != 1:
            raise InvariantViolation(f"Candidate sets have unequal sizes {sorted(sizes)}")
        return sizes.pop()

    @property
    def catalog(self):
        """Union ordonnée des opérations encore candidates"""
        return tuple(sorted({op for ops in self.candidates.values() for op in ops}))

    @property
    def is_resolved(self):
        return all(len(ops) == 1 for ops in self.candidates.values())


@dataclass(frozen=True)
class Genotype:
    """Une opération choisie par arête ; `choices` est trié par arête"""
    choices: tuple = ()

    @classmethod
    def from_choices(cls, choices):
        return cls(tuple(sorted(
            (edge, OperationKind(op)) for edge, op in dict(choices).items()
        )))

    def __getitem__(self, edge):
        for candidate, op in self.choices:
            if candidate == edge:
                return op
        raise OperationNotFound(f"Genotype has no choice for edge {edge}")

    def __len__(self):
        return len(self.choices)

    def items(self):
        return iter(self.choices)

    def as_dict(self):
        return dict(self.choices)

    @property
    def edges(self):
        return [edge for edge, _ in self.choices]

    @property
    def sort_key(self):
        """Clé lexicographique (indices du catalogue dans l'ordre des arêtes)"""
        return tuple(int(op) for _, op in self.choices)

    def __str__(self):
        return ' '.join(f"{edge}={op.label}" for edge, op in self.choices)


# ============= OPÉRATIONS SUR L'ESPACE =============

def build_search_space(cells, nodes, catalog, reduction_cells=()):
    """Chaque arête de chaque cellule reçoit une copie du catalogue complet"""
    if cells < 1:
        raise ConfigurationError(f"cells must be >= 1, got {cells}")
    if nodes < 1:
        raise ConfigurationError(f"nodes must be >= 1, got {nodes}")
    ordered = tuple(sorted({OperationKind(op) for op in catalog}))
    if not ordered:
        raise ConfigurationError("The operation catalog is empty")
    for index in reduction_cells:
        if not 0 <= index < cells:
            raise ConfigurationError(f"Reduction cell {index} outside [0, {cells})")

    candidates = {
        edge: ordered
        for cell in range(cells)
        for edge in cell_edges(cell, nodes)
    }
    logger.debug("Built space v=%s M=%s K=%s (%s edges)", cells, nodes, len(ordered), len(candidates))
    return SearchSpace(
        cells=cells,
        nodes=nodes,
        candidates=candidates,
        reduction_cells=tuple(sorted(set(reduction_cells))),
    )


def space_size(space):
    """Produit des cardinalités ; entier Python donc précision arbitraire"""
    return math.prod(len(ops) for ops in space.candidates.values())


def prune_operation(space, edge, op):
    """Retire `op` de l'arête `edge` seulement ; renvoie un nouvel instantané"""
    current = space.candidates_for(edge)
    op = OperationKind(op)
    if op not in current:
        raise OperationNotFound(f"Operation {op.label} is not a candidate on edge {edge}")
    if len(current) < 2:
        raise InvariantViolation(f"Cannot remove the last candidate of edge {edge}")

    candidates = dict(space.candidates)
    candidates[edge] = tuple(kind for kind in current if kind != op)
    return SearchSpace(
        cells=space.cells,
        nodes=space.nodes,
        candidates=candidates,
        reduction_cells=space.reduction_cells,
    )


def validate_genotype(space, genotype):
    """Vrai ssi le génotype couvre chaque arête une fois avec une opération candidate"""
    choices = genotype.as_dict() if isinstance(genotype, Genotype) else dict(genotype)
    if len(choices) != len(genotype) or set(choices) != set(space.candidates):
        return False
    return all(op in space.candidates[edge] for edge, op in choices.items())


def uniform_genotype(space, index):
    """Génotype choisissant le `index`-ième candidat (ordre du catalogue) sur chaque arête"""
    return Genotype.from_choices({
        edge: ops[index] for edge, ops in space.candidates.items()
    })
