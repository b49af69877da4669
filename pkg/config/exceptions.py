"""Exceptions partagées par toutes les applications du projet."""


class SearchError(Exception):
    """Erreur de base de la recherche d'architecture"""


class ConfigurationError(SearchError):
    """Configuration invalide (catalogue vide, utilité manquante, ...)"""


class InvariantViolation(SearchError):
    """Une mutation casserait un invariant de l'espace de recherche"""


class OperationNotFound(SearchError, KeyError):
    """Opération absente de l'ensemble candidat ou du catalogue"""

    def __str__(self):
        return str(self.args[0]) if self.args else ''


class UndefinedArmError(SearchError):
    """Bras jamais évalué (n = 0) : le balayage d'initialisation doit passer avant"""


class RewardValidationError(SearchError, ValueError):
    """Précision hors de [0, 1]"""


class SchedulingError(SearchError):
    """Abandon demandé hors de la frontière de tour"""


class EvaluationError(SearchError):
    """Échec d'un évaluateur"""


class SearchAborted(SearchError):
    """Recherche interrompue par un évaluateur ; l'historique partiel est conservé"""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class SpaceTooLargeError(SearchError):
    """Espace trop grand pour l'énumération exhaustive"""

    def __init__(self, size, limit):
        super().__init__(f"Search space holds {size} genotypes, enumeration limit is {limit}")
        self.size = size
        self.limit = limit


class ShapeError(SearchError, ValueError):
    """Formes de tenseurs incompatibles"""


class GaborParameterError(SearchError, ValueError):
    """Paramètres de Gabor hors domaine (sigma <= 0, longueur d'onde <= 0)"""


class AttackError(SearchError):
    """Gradient non fini pendant la génération d'une perturbation"""


class CheckpointError(SearchError):
    """Point de reprise illisible ou incohérent"""
