import numpy as np
from rest_framework import serializers

from robust_ops.models import AttackConfig
from search_space.models import EdgeId
from search_space.serializers import (
    GenotypeSerializer, OperationField, SearchSpaceSerializer, with_from_field,
)
from .models import (
    ArmStats, BanditState, SearchConfig, SearchStrategy, TrialPhase, TrialRecord,
)


# ================================
# CONFIGURATION
# ================================

class AttackConfigSerializer(serializers.Serializer):
    epsilon = serializers.FloatField(min_value=0.0, default=0.3)
    alpha = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)
    steps = serializers.IntegerField(min_value=1, default=1)
    random_init = serializers.BooleanField(default=True)

    def to_representation(self, instance):
        return instance.as_dict()

    def validate(self, attrs):
        if attrs['epsilon'] > 0 and attrs.get('alpha') == 0:
            raise serializers.ValidationError({'alpha': "alpha must be > 0 when epsilon > 0."})
        return attrs

    def create(self, validated_data):
        return AttackConfig(**validated_data)


class SearchConfigSerializer(serializers.Serializer):
    """Clés JSON : T, lambda, seed, attack, checkpoint_every"""
    T = serializers.IntegerField(min_value=1, default=3, source='samples_per_op')
    seed = serializers.IntegerField(min_value=0, default=0)
    attack = AttackConfigSerializer(required=False)
    checkpoint_every = serializers.IntegerField(min_value=0, default=0)

    def get_fields(self):
        fields = super().get_fields()
        fields['lambda'] = serializers.FloatField(
            min_value=0.0, max_value=1.0, default=0.7, source='ema_weight'
        )
        return fields

    def to_representation(self, instance):
        return {
            'T': instance.samples_per_op,
            'lambda': instance.ema_weight,
            'seed': instance.seed,
            'attack': instance.attack.as_dict(),
            'checkpoint_every': instance.checkpoint_every,
        }

    def create(self, validated_data):
        attack = validated_data.pop('attack', None)
        return SearchConfig(
            attack=AttackConfig(**attack) if attack else AttackConfig(),
            **validated_data,
        )


# ================================
# ÉTAT DU BANDIT
# ================================

class ArmSerializer(serializers.Serializer):
    cell = serializers.IntegerField(min_value=0)
    to = serializers.IntegerField(min_value=1, source='to_node')
    op = OperationField()
    m = serializers.FloatField()
    n = serializers.IntegerField(min_value=0)

    def get_fields(self):
        return with_from_field(super().get_fields())


class BanditStateSerializer(serializers.Serializer):
    arms = ArmSerializer(many=True)
    N = serializers.IntegerField(min_value=0, source='total_trials')
    c = serializers.IntegerField(min_value=0, source='round_trials')
    t = serializers.IntegerField(min_value=0, source='epoch')
    K_current = serializers.IntegerField(min_value=0, source='cardinality')
    K = serializers.IntegerField(min_value=1, source='catalog_size')

    def to_representation(self, instance):
        return {
            'arms': [
                {
                    'from': edge.from_node,
                    'cell': edge.cell,
                    'to': edge.to_node,
                    'op': op.label,
                    'm': stats.m,
                    'n': stats.n,
                }
                for (edge, op), stats in sorted(instance.stats.items())
            ],
            'N': instance.total_trials,
            'c': instance.round_trials,
            't': instance.epoch,
            'K_current': instance.cardinality,
            'K': instance.catalog_size,
        }

    def validate(self, attrs):
        if attrs['cardinality'] > attrs['catalog_size']:
            raise serializers.ValidationError({'K_current': "K_current exceeds the catalog size K."})
        seen = set()
        for arm in attrs['arms']:
            key = (arm['cell'], arm['from_node'], arm['to_node'], arm['op'])
            if key in seen:
                raise serializers.ValidationError(
                    {'arms': f"Arm {arm['op'].label} on edge {key[:3]} appears more than once."}
                )
            seen.add(key)
        return attrs

    def create(self, validated_data):
        stats = {
            (EdgeId(arm['cell'], arm['from_node'], arm['to_node']), arm['op']): ArmStats(m=arm['m'], n=arm['n'])
            for arm in validated_data['arms']
        }
        return BanditState(
            stats=stats,
            total_trials=validated_data['total_trials'],
            round_trials=validated_data['round_trials'],
            epoch=validated_data['epoch'],
            cardinality=validated_data['cardinality'],
            catalog_size=validated_data['catalog_size'],
        )


class TrialRecordSerializer(serializers.Serializer):
    trial = serializers.IntegerField(min_value=0)
    phase = serializers.ChoiceField(choices=TrialPhase.choices)
    genotype = GenotypeSerializer()
    accuracy = serializers.FloatField(min_value=0.0, max_value=1.0)
    K_current = serializers.IntegerField(min_value=1, source='cardinality')
    N = serializers.IntegerField(min_value=1, source='total_trials')

    def to_representation(self, instance):
        return {
            'trial': instance.trial,
            'phase': str(instance.phase),
            'genotype': GenotypeSerializer(instance.genotype).data,
            'accuracy': instance.accuracy,
            'K_current': instance.cardinality,
            'N': instance.total_trials,
        }

    def create(self, validated_data):
        genotype = GenotypeSerializer().create(validated_data.pop('genotype'))
        return TrialRecord(genotype=genotype, **validated_data)


# ================================
# POINT DE REPRISE DE LA RECHERCHE
# ================================

class SearchSnapshotSerializer(serializers.Serializer):
    """Tout ce qu'il faut pour reprendre une BanditSearch à l'identique"""
    strategy = serializers.ChoiceField(choices=SearchStrategy.choices)
    search = SearchConfigSerializer()
    space = SearchSpaceSerializer()
    state = BanditStateSerializer()
    rng_state = serializers.JSONField()
    history = TrialRecordSerializer(many=True)

    def to_representation(self, instance):
        return {
            'strategy': str(instance.strategy.value),
            'search': SearchConfigSerializer(instance.config).data,
            'space': SearchSpaceSerializer(instance.space).data,
            'state': BanditStateSerializer(instance.state).data,
            'rng_state': instance.rng.bit_generator.state,
            'history': TrialRecordSerializer(instance.history, many=True).data,
        }

    def validate_rng_state(self, value):
        if not isinstance(value, dict) or value.get('bit_generator') != 'PCG64':
            raise serializers.ValidationError("Expected a PCG64 bit generator state.")
        return value

    def validate(self, attrs):
        edges = {
            (edge['cell'], edge['from_node'], edge['to_node']): set(edge['ops'])
            for edge in attrs['space']['edges']
        }
        arms = set()
        for arm in attrs['state']['arms']:
            edge = (arm['cell'], arm['from_node'], arm['to_node'])
            if edge not in edges:
                raise serializers.ValidationError({'state': {'arms': f"Arm on unknown edge {edge}."}})
            arms.add((edge, arm['op']))
        # les bras abandonnés restent dans l'état ; chaque candidat doit avoir le sien
        for edge, ops in edges.items():
            for op in sorted(ops):
                if (edge, op) not in arms:
                    raise serializers.ValidationError(
                        {'state': {'arms': f"No arm for candidate {op.label} on edge {edge}."}}
                    )
        for edge in attrs['space']['edges']:
            if len(edge['ops']) != attrs['state']['cardinality']:
                raise serializers.ValidationError(
                    {'space': "Candidate set sizes disagree with K_current."}
                )
        if len(attrs['history']) != attrs['state']['total_trials']:
            raise serializers.ValidationError(
                {'history': "History length disagrees with the trial counter N."}
            )
        return attrs

    def restore(self, evaluator):
        """Reconstruit la BanditSearch ; appeler après is_valid()"""
        from .search import BanditSearch

        data = self.validated_data
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = data['rng_state']
        return BanditSearch(
            space=SearchSpaceSerializer().create(data['space']),
            config=SearchConfigSerializer().create(dict(data['search'])),
            evaluator=evaluator,
            strategy=data['strategy'],
            state=BanditStateSerializer().create(data['state']),
            rng=rng,
            history=[TrialRecordSerializer().create(dict(record)) for record in data['history']],
        )
