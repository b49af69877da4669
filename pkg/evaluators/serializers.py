from rest_framework import serializers

from .models import EvaluatorKind, TinyNetSpec, ValidationMode
from .synthetic import SyntheticEvaluator, plant_synthetic_spec
from .tinynet import TinyNetEvaluator


# ================================
# ÉVALUATEURS
# ================================

class SyntheticConfigSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=[EvaluatorKind.SYNTHETIC])
    gap = serializers.FloatField(min_value=0.0, max_value=0.99, default=0.5)
    noise_sigma = serializers.FloatField(min_value=0.0, default=0.0)
    clip = serializers.BooleanField(default=True)
    utility_seed = serializers.IntegerField(min_value=0, default=0)


class TinyNetConfigSerializer(serializers.Serializer):
    """L'attaque d'entraînement est celle de search.attack"""
    kind = serializers.ChoiceField(choices=[EvaluatorKind.TINYNET])
    channels = serializers.IntegerField(min_value=1, default=4)
    train_epochs = serializers.IntegerField(min_value=0, default=1)
    dataset_size = serializers.IntegerField(min_value=2, default=768)
    dataset_seed = serializers.IntegerField(min_value=0, default=0)
    learning_rate = serializers.FloatField(min_value=0.0, default=0.05)
    batch_size = serializers.IntegerField(min_value=1, default=32)
    validation = serializers.ChoiceField(choices=ValidationMode.choices, default=ValidationMode.CLEAN)
    adversarial_training = serializers.BooleanField(default=True)

    def validate_learning_rate(self, value):
        if value <= 0:
            raise serializers.ValidationError("learning_rate must be > 0.")
        return value


EVALUATOR_SERIALIZERS = {
    EvaluatorKind.SYNTHETIC: SyntheticConfigSerializer,
    EvaluatorKind.TINYNET: TinyNetConfigSerializer,
}


class EvaluatorConfigSerializer(serializers.Serializer):
    """Choix étiqueté par `kind` : synthetic | tinynet"""

    def to_internal_value(self, data):
        if not isinstance(data, dict):
            raise serializers.ValidationError({'kind': "Evaluator must be an object with a 'kind'."})
        kind = data.get('kind')
        if kind not in EVALUATOR_SERIALIZERS:
            raise serializers.ValidationError(
                {'kind': f"Unknown evaluator kind '{kind}', expected one of {list(EvaluatorKind.values)}."}
            )
        serializer = EVALUATOR_SERIALIZERS[kind](data=data)
        serializer.is_valid(raise_exception=True)
        return dict(serializer.validated_data)

    def to_representation(self, instance):
        return dict(instance)

    @staticmethod
    def build(data, space, attack):
        """Évaluateur prêt à l'emploi pour l'espace `space`"""
        if data['kind'] == EvaluatorKind.SYNTHETIC:
            spec = plant_synthetic_spec(
                space, gap=data['gap'], seed=data['utility_seed'],
                noise_sigma=data['noise_sigma'], clip=data['clip'],
            )
            return SyntheticEvaluator(spec)
        spec = TinyNetSpec(
            channels=data['channels'],
            train_epochs=data['train_epochs'],
            dataset_size=data['dataset_size'],
            dataset_seed=data['dataset_seed'],
            learning_rate=data['learning_rate'],
            batch_size=data['batch_size'],
            validation=data['validation'],
            attack=attack if data['adversarial_training'] else None,
        )
        return TinyNetEvaluator(spec, reduction_cells=space.reduction_cells)
