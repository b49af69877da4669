from rest_framework import serializers

from config.exceptions import OperationNotFound
from .models import EdgeId, Genotype, OperationKind, SearchSpace


# ================================
# CHAMPS
# ================================

class OperationField(serializers.Field):
    """Opération sérialisée par son nom stable ('gabor_3x3', ...)"""

    default_error_messages = {
        'unknown': "Unknown operation '{name}'.",
        'invalid': "Operation name must be a string.",
    }

    def to_representation(self, value):
        return OperationKind(value).label

    def to_internal_value(self, data):
        if not isinstance(data, str):
            self.fail('invalid')
        try:
            return OperationKind.from_name(data)
        except OperationNotFound:
            self.fail('unknown', name=data)


def with_from_field(fields, **kwargs):
    """'from' est un mot réservé : on l'ajoute en tête des champs déclarés"""
    ordered = {'from': serializers.IntegerField(min_value=0, source='from_node', **kwargs)}
    ordered.update(fields)
    return ordered


# ================================
# SERIALIZERS DU GÉNOTYPE
# ================================

class EdgeChoiceSerializer(serializers.Serializer):
    to = serializers.IntegerField(min_value=1, source='to_node')
    op = OperationField()

    def get_fields(self):
        return with_from_field(super().get_fields())

    def validate(self, attrs):
        if attrs['from_node'] >= attrs['to_node']:
            raise serializers.ValidationError("Edge must satisfy from < to.")
        return attrs


class CellChoicesSerializer(serializers.Serializer):
    edges = EdgeChoiceSerializer(many=True)


class GenotypeSerializer(serializers.Serializer):
    """
    {"cells": [{"edges": [{"from": 0, "to": 1, "op": "gabor_3x3"}, ...]}, ...]}
    L'indice de cellule est la position dans la liste.
    """
    cells = CellChoicesSerializer(many=True)

    def to_representation(self, instance):
        cells = {}
        for edge, op in instance.items():
            cells.setdefault(edge.cell, []).append({
                'from': edge.from_node,
                'to': edge.to_node,
                'op': op.label,
            })
        count = max(cells) + 1 if cells else 0
        return {'cells': [{'edges': cells.get(index, [])} for index in range(count)]}

    def validate(self, attrs):
        seen = set()
        for cell_index, cell in enumerate(attrs['cells']):
            for edge in cell['edges']:
                key = (cell_index, edge['from_node'], edge['to_node'])
                if key in seen:
                    raise serializers.ValidationError(
                        {'cells': f"Edge {key} appears more than once."}
                    )
                seen.add(key)
        return attrs

    def create(self, validated_data):
        return Genotype.from_choices({
            EdgeId(cell_index, edge['from_node'], edge['to_node']): edge['op']
            for cell_index, cell in enumerate(validated_data['cells'])
            for edge in cell['edges']
        })


# ================================
# SERIALIZERS DE L'ESPACE (points de reprise)
# ================================

class EdgeCandidatesSerializer(serializers.Serializer):
    cell = serializers.IntegerField(min_value=0)
    to = serializers.IntegerField(min_value=1, source='to_node')
    ops = serializers.ListField(child=OperationField(), allow_empty=False)

    def get_fields(self):
        return with_from_field(super().get_fields())


class SearchSpaceSerializer(serializers.Serializer):
    cells = serializers.IntegerField(min_value=1)
    nodes = serializers.IntegerField(min_value=1)
    reduction_cells = serializers.ListField(child=serializers.IntegerField(min_value=0), required=False)
    edges = EdgeCandidatesSerializer(many=True)

    def to_representation(self, instance):
        return {
            'cells': instance.cells,
            'nodes': instance.nodes,
            'reduction_cells': list(instance.reduction_cells),
            'edges': [
                {
                    'from': edge.from_node,
                    'cell': edge.cell,
                    'to': edge.to_node,
                    'ops': [op.label for op in instance.candidates[edge]],
                }
                for edge in instance.edges
            ],
        }

    def validate(self, attrs):
        expected = attrs['nodes'] * (attrs['nodes'] + 1) // 2 * attrs['cells']
        if len(attrs['edges']) != expected:
            raise serializers.ValidationError(
                {'edges': f"Expected {expected} edges, got {len(attrs['edges'])}."}
            )
        seen = set()
        for edge in attrs['edges']:
            key = (edge['cell'], edge['from_node'], edge['to_node'])
            if not edge['from_node'] < edge['to_node'] <= attrs['nodes'] or edge['cell'] >= attrs['cells']:
                raise serializers.ValidationError({'edges': f"Edge {key} lies outside the cell DAG."})
            if key in seen:
                raise serializers.ValidationError({'edges': f"Edge {key} appears more than once."})
            seen.add(key)
        return attrs

    def create(self, validated_data):
        candidates = {
            EdgeId(edge['cell'], edge['from_node'], edge['to_node']): tuple(sorted(set(edge['ops'])))
            for edge in validated_data['edges']
        }
        return SearchSpace(
            cells=validated_data['cells'],
            nodes=validated_data['nodes'],
            candidates=candidates,
            reduction_cells=tuple(validated_data.get('reduction_cells', [])),
        )
