from dataclasses import replace

from django.conf import settings
from rest_framework import serializers

from bandit.serializers import SearchConfigSerializer, SearchSnapshotSerializer
from evaluators.models import EvaluatorKind
from evaluators.serializers import EvaluatorConfigSerializer
from search_space.models import FULL_CATALOG, build_search_space
from search_space.serializers import OperationField
from .models import RunConfig


def describe_errors(detail, prefix=''):
    """Aplatit les erreurs DRF en 'search.lambda: message' pour le diagnostic en ligne de commande"""
    if isinstance(detail, dict):
        parts = []
        for key, value in detail.items():
            path = prefix if key == 'non_field_errors' else (f"{prefix}.{key}" if prefix else str(key))
            parts.extend(describe_errors(value, path))
        return parts
    if isinstance(detail, list):
        if all(isinstance(item, str) for item in detail):
            return [f"{prefix or 'config'}: {' '.join(str(item) for item in detail)}"]
        parts = []
        for index, item in enumerate(detail):
            if item:
                parts.extend(describe_errors(item, f"{prefix}[{index}]"))
        return parts
    return [f"{prefix or 'config'}: {detail}"]


# ================================
# ESPACE DE RECHERCHE
# ================================

class SpaceConfigSerializer(serializers.Serializer):
    cells = serializers.IntegerField(min_value=1, default=1)
    nodes = serializers.IntegerField(min_value=1, default=2)
    catalog = serializers.ListField(child=OperationField(), allow_empty=False, required=False)
    reduction_cells = serializers.ListField(
        child=serializers.IntegerField(min_value=0), required=False, default=list
    )

    def validate_catalog(self, value):
        if len(set(value)) != len(value):
            raise serializers.ValidationError("Catalog lists an operation more than once.")
        return value

    def validate(self, attrs):
        for index in attrs.get('reduction_cells', []):
            if index >= attrs['cells']:
                raise serializers.ValidationError(
                    {'reduction_cells': f"Reduction cell {index} outside [0, {attrs['cells']})."}
                )
        return attrs

    def create(self, validated_data):
        return build_search_space(
            cells=validated_data['cells'],
            nodes=validated_data['nodes'],
            catalog=validated_data.get('catalog') or FULL_CATALOG,
            reduction_cells=validated_data.get('reduction_cells', ()),
        )


def _space_defaults():
    serializer = SpaceConfigSerializer(data={})
    serializer.is_valid(raise_exception=True)
    return serializer.validated_data


# ================================
# CONFIGURATION D'EXPÉRIENCE
# ================================

class RunConfigSerializer(serializers.Serializer):
    schema_version = serializers.IntegerField()
    search = SearchConfigSerializer(required=False)
    space = SpaceConfigSerializer(required=False)
    evaluator = EvaluatorConfigSerializer()
    output_dir = serializers.CharField(required=False, allow_blank=True)
    seeds = serializers.ListField(child=serializers.IntegerField(min_value=0), allow_empty=False, required=False)
    jobs = serializers.IntegerField(min_value=1, required=False)
    checkpoint_every = serializers.IntegerField(min_value=0, required=False)

    def validate_schema_version(self, value):
        expected = settings.ABANDIT['SCHEMA_VERSION']
        if value != expected:
            raise serializers.ValidationError(f"Unsupported schema version {value}, expected {expected}.")
        return value

    def validate(self, attrs):
        space = attrs.get('space') or _space_defaults()
        if attrs['evaluator']['kind'] == EvaluatorKind.TINYNET:
            if 8 % 2 ** len(space.get('reduction_cells', [])):
                raise serializers.ValidationError(
                    {'space': {'reduction_cells': "An 8x8 input cannot be halved that many times."}}
                )
        return attrs

    def create(self, validated_data):
        search = SearchConfigSerializer().create(dict(validated_data.get('search', {})))
        if 'checkpoint_every' in validated_data:
            search = replace(search, checkpoint_every=validated_data['checkpoint_every'])
        space = SpaceConfigSerializer().create(validated_data.get('space') or _space_defaults())
        return RunConfig(
            search=search,
            space=space,
            evaluator=dict(validated_data['evaluator']),
            output_dir=validated_data.get('output_dir') or settings.ABANDIT['OUTPUT_DIR'],
            seeds=tuple(validated_data.get('seeds') or [search.seed]),
            jobs=validated_data.get('jobs', settings.ABANDIT['JOBS']),
        )

    def to_representation(self, instance):
        search = SearchConfigSerializer(instance.search).data
        return {
            'schema_version': settings.ABANDIT['SCHEMA_VERSION'],
            'search': search,
            'space': {
                'cells': instance.space.cells,
                'nodes': instance.space.nodes,
                'catalog': [op.label for op in instance.space.catalog],
                'reduction_cells': list(instance.space.reduction_cells),
            },
            'evaluator': {key: str(value) if key == 'kind' else value for key, value in instance.evaluator.items()},
            'output_dir': str(instance.output_dir),
            'seeds': list(instance.seeds),
            'jobs': instance.jobs,
            'checkpoint_every': instance.search.checkpoint_every,
        }


# ================================
# POINT DE REPRISE D'UNE GRAINE
# ================================

class CheckpointSerializer(serializers.Serializer):
    """{"schema_version", "seed", "run": <config>, "snapshot": <BanditSearch>}"""
    schema_version = serializers.IntegerField()
    seed = serializers.IntegerField(min_value=0)
    run = RunConfigSerializer()
    snapshot = SearchSnapshotSerializer()

    def validate_schema_version(self, value):
        expected = settings.ABANDIT['SCHEMA_VERSION']
        if value != expected:
            raise serializers.ValidationError(f"Unsupported schema version {value}, expected {expected}.")
        return value

    def validate(self, attrs):
        space = attrs['run'].get('space') or _space_defaults()
        catalog = set(space.get('catalog') or FULL_CATALOG)
        snapshot = attrs['snapshot']
        if snapshot['state']['catalog_size'] != len(catalog):
            raise serializers.ValidationError(
                {'snapshot': {'state': {'K': "Catalog size disagrees with the run configuration."}}}
            )
        for edge in snapshot['space']['edges']:
            if not set(edge['ops']) <= catalog:
                raise serializers.ValidationError(
                    {'snapshot': {'space': "Candidate operations outside the configured catalog."}}
                )
        if (snapshot['space']['cells'], snapshot['space']['nodes']) != (space['cells'], space['nodes']):
            raise serializers.ValidationError(
                {'snapshot': {'space': "Cell layout disagrees with the run configuration."}}
            )
        if snapshot['search']['seed'] != attrs['seed']:
            raise serializers.ValidationError({'seed': "Seed disagrees with the snapshot."})
        return attrs

    def to_representation(self, instance):
        run_config, seed, search = instance
        return {
            'schema_version': settings.ABANDIT['SCHEMA_VERSION'],
            'seed': seed,
            'run': RunConfigSerializer(run_config).data,
            'snapshot': SearchSnapshotSerializer(search).data,
        }

    def restore(self):
        """-> (RunConfig, graine, BanditSearch) ; appeler après is_valid()"""
        data = self.validated_data
        run_config = RunConfigSerializer().create(data['run'])
        seed = data['seed']
        evaluator = run_config.with_seed(seed).build_evaluator()
        snapshot = SearchSnapshotSerializer(data=self.initial_data['snapshot'])
        snapshot.is_valid(raise_exception=True)
        return run_config, seed, snapshot.restore(evaluator)
