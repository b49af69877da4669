from django.test import SimpleTestCase

from config.exceptions import (
    ConfigurationError, InvariantViolation, OperationNotFound,
)
from .models import (
    FULL_CATALOG, EdgeId, Genotype, OperationKind, build_search_space,
    cell_edges, cell_schedule, prune_operation, space_size, uniform_genotype,
    validate_genotype,
)
from .serializers import GenotypeSerializer, SearchSpaceSerializer


class OperationCatalogTests(SimpleTestCase):

    def test_full_catalog_has_nine_stable_indices(self):
        self.assertEqual(len(FULL_CATALOG), 9)
        self.assertEqual([int(kind) for kind in FULL_CATALOG], list(range(9)))
        self.assertEqual(OperationKind.GABOR_3X3.label, 'gabor_3x3')

    def test_lookup_by_name(self):
        self.assertEqual(OperationKind.from_name('sep_conv_5x5'), OperationKind.SEP_CONV_5X5)

    def test_unknown_name_is_reported(self):
        with self.assertRaises(OperationNotFound) as ctx:
            OperationKind.from_name('conv_7x7')
        self.assertIn('conv_7x7', str(ctx.exception))


class EdgeTests(SimpleTestCase):

    def test_edge_count_per_cell(self):
        for nodes in range(1, 9):
            self.assertEqual(len(cell_edges(0, nodes)), nodes * (nodes + 1) // 2)

    def test_cycles_are_rejected(self):
        with self.assertRaises(ConfigurationError):
            EdgeId(0, 2, 1)
        with self.assertRaises(ConfigurationError):
            EdgeId(0, 1, 1)

    def test_schedule_reads_only_completed_nodes(self):
        for nodes in range(1, 9):
            schedule = cell_schedule(nodes)
            self.assertEqual(len(schedule), nodes * (nodes + 1) // 2)
            for position, (source, _) in enumerate(schedule):
                later_inbound = [target for _, target in schedule[position:] if target == source]
                self.assertEqual(later_inbound, [])


class SearchSpaceTests(SimpleTestCase):

    def test_six_cell_four_node_space(self):
        space = build_search_space(6, 4, FULL_CATALOG)
        self.assertEqual(space.edge_count, 60)
        self.assertTrue(all(len(ops) == 9 for ops in space.candidates.values()))
        self.assertEqual(space_size(space), 9 ** 60)

    def test_one_pruning_round_reduces_to_eight_power(self):
        space = build_search_space(6, 4, FULL_CATALOG)
        for edge in space.edges:
            space = prune_operation(space, edge, OperationKind.DENOISE)
        self.assertEqual(space_size(space), 8 ** 60)
        self.assertEqual(space.cardinality, 8)

    def test_degenerate_and_small_spaces(self):
        single = build_search_space(1, 1, [OperationKind.SKIP_CONNECT])
        self.assertEqual(single.edge_count, 1)
        self.assertEqual(space_size(single), 1)
        small = build_search_space(1, 2, FULL_CATALOG[:3])
        self.assertEqual(small.edge_count, 3)
        self.assertEqual(space_size(small), 27)

    def test_empty_catalog_is_rejected(self):
        with self.assertRaises(ConfigurationError):
            build_search_space(1, 2, [])

    def test_prune_touches_one_edge_only(self):
        space = build_search_space(1, 2, FULL_CATALOG[:3])
        edge, sibling = space.edges[0], space.edges[1]
        pruned = prune_operation(space, edge, OperationKind.AVG_POOL_3X3)
        self.assertEqual(pruned.candidates[edge], (OperationKind.MAX_POOL_3X3, OperationKind.SKIP_CONNECT))
        self.assertEqual(len(pruned.candidates[sibling]), 3)
        self.assertEqual(len(space.candidates[edge]), 3)

    def test_pruning_divides_size_exactly(self):
        space = build_search_space(2, 3, FULL_CATALOG)
        pruned = prune_operation(space, space.edges[4], OperationKind.GABOR_3X3)
        self.assertEqual(space_size(pruned) * 9, space_size(space) * 8)

    def test_prune_errors(self):
        space = build_search_space(1, 1, FULL_CATALOG[:2])
        edge = space.edges[0]
        with self.assertRaises(OperationNotFound):
            prune_operation(space, edge, OperationKind.DENOISE)
        pruned = prune_operation(space, edge, OperationKind.MAX_POOL_3X3)
        with self.assertRaises(InvariantViolation):
            prune_operation(pruned, edge, OperationKind.AVG_POOL_3X3)

    def test_validate_genotype(self):
        space = build_search_space(1, 2, FULL_CATALOG[:3])
        genotype = uniform_genotype(space, 1)
        self.assertTrue(validate_genotype(space, genotype))

        pruned = prune_operation(space, space.edges[0], OperationKind.AVG_POOL_3X3)
        self.assertFalse(validate_genotype(pruned, genotype))

        missing = Genotype.from_choices({edge: OperationKind.MAX_POOL_3X3 for edge in space.edges[1:]})
        self.assertFalse(validate_genotype(space, missing))


class SerializerTests(SimpleTestCase):

    def test_genotype_document_layout(self):
        genotype = Genotype.from_choices({
            EdgeId(0, 0, 1): OperationKind.GABOR_3X3,
            EdgeId(1, 0, 1): OperationKind.DENOISE,
        })
        self.assertEqual(GenotypeSerializer(genotype).data, {'cells': [
            {'edges': [{'from': 0, 'to': 1, 'op': 'gabor_3x3'}]},
            {'edges': [{'from': 0, 'to': 1, 'op': 'denoise'}]},
        ]})

    def test_genotype_round_trip(self):
        space = build_search_space(2, 3, FULL_CATALOG)
        genotype = uniform_genotype(space, 5)
        serializer = GenotypeSerializer(data=GenotypeSerializer(genotype).data)
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.save(), genotype)

    def test_unknown_operation_names_the_field(self):
        serializer = GenotypeSerializer(data={'cells': [{'edges': [{'from': 0, 'to': 1, 'op': 'conv_7x7'}]}]})
        self.assertFalse(serializer.is_valid())
        self.assertIn('op', serializer.errors['cells'][0]['edges'][0])

    def test_duplicate_edges_are_rejected(self):
        edge = {'from': 0, 'to': 1, 'op': 'skip_connect'}
        serializer = GenotypeSerializer(data={'cells': [{'edges': [edge, edge]}]})
        self.assertFalse(serializer.is_valid())
        self.assertIn('cells', serializer.errors)

    def test_space_with_a_repeated_edge_is_rejected(self):
        data = SearchSpaceSerializer(build_search_space(1, 2, FULL_CATALOG[:3])).data
        data['edges'][1] = dict(data['edges'][0])
        serializer = SearchSpaceSerializer(data=data)
        self.assertFalse(serializer.is_valid())
        self.assertIn('edges', serializer.errors)

    def test_space_round_trip_after_pruning(self):
        space = build_search_space(1, 2, FULL_CATALOG[:4], reduction_cells=[0])
        space = prune_operation(space, space.edges[0], OperationKind.SKIP_CONNECT)
        serializer = SearchSpaceSerializer(data=SearchSpaceSerializer(space).data)
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.save(), space)
