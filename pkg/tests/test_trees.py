import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdeseries.errors import ResourceLimitError, StructureError, ValidationError
from mdeseries.trees import (
    MAX_ORDER,
    OrderedTree,
    build_frame,
    catalan,
    check_order,
    classify_components,
    compose,
    decode_tree,
    decompose,
    encode_tree,
    enumerate_trees,
    summation_graph,
    summation_graphs,
)

CATALAN = [1, 1, 2, 5, 14, 42, 132, 429, 1430, 4862, 16796]
EMPTY = OrderedTree("")
EDGE = OrderedTree("10")
# root -> u -> (v -> (leaf, leaf), leaf); vertex v has two children
FIVE_EDGE_TREE = OrderedTree("1110100100")


def catalan_by_recurrence(k):
    c = [1]
    for n in range(1, k + 1):
        c.append(sum(c[i] * c[n - 1 - i] for i in range(n)))
    return c[k]


@st.composite
def trees(draw, max_edges=7):
    k = draw(st.integers(0, max_edges))
    return draw(st.sampled_from(enumerate_trees(k)))


def test_catalan_table_matches_recurrence():
    assert CATALAN == [catalan_by_recurrence(k) for k in range(11)]
    assert CATALAN == [catalan(k) for k in range(11)]


@pytest.mark.parametrize("k", range(11))
def test_enumeration_counts(k):
    assert len(enumerate_trees(k)) == CATALAN[k]


def test_enumeration_small_cases():
    assert enumerate_trees(0) == [EMPTY]
    assert len(enumerate_trees(3)) == 5
    assert len(enumerate_trees(5)) == 42


def test_enumeration_is_sorted_and_distinct():
    for k in range(8):
        words = [t.word for t in enumerate_trees(k)]
        assert words == sorted(words)
        assert len(set(words)) == len(words)


def test_order_guard():
    assert check_order(MAX_ORDER) == MAX_ORDER
    with pytest.raises(ResourceLimitError):
        enumerate_trees(MAX_ORDER + 1)
    with pytest.raises(ValidationError):
        enumerate_trees(-1)


@pytest.mark.parametrize("word", ["1", "0", "01", "1001", "12", "110"])
def test_invalid_words_rejected(word):
    with pytest.raises(ValidationError):
        OrderedTree(word)


def test_compose_of_empty_trees_is_single_edge():
    assert compose(EMPTY, EMPTY) == EDGE


def test_decompose_single_edge():
    assert decompose(EDGE) == (EMPTY, EMPTY)


def test_decompose_empty_tree_fails():
    with pytest.raises(ValidationError):
        decompose(EMPTY)


@given(trees(5), trees(5))
def test_compose_edge_count(g1, g2):
    assert compose(g1, g2).edge_count == g1.edge_count + g2.edge_count + 1


@pytest.mark.parametrize("k", range(1, 7))
def test_compose_covers_level_exactly(k):
    built = [compose(g1, g2) for n1 in range(k) for g1 in enumerate_trees(n1) for g2 in enumerate_trees(k - 1 - n1)]
    assert len(built) == len(set(built))
    assert set(built) == set(enumerate_trees(k))


def test_decompose_inverts_compose_on_random_pairs():
    rng = random.Random(3)
    for _ in range(1000):
        g1 = rng.choice(enumerate_trees(rng.randint(0, 5)))
        g2 = rng.choice(enumerate_trees(rng.randint(0, 5)))
        assert decompose(compose(g1, g2)) == (g1, g2)


def test_every_five_edge_tree_has_unique_preimage():
    preimages = {}
    for n1 in range(5):
        for g1 in enumerate_trees(n1):
            for g2 in enumerate_trees(4 - n1):
                preimages.setdefault(compose(g1, g2), []).append((g1, g2))
    assert set(preimages) == set(enumerate_trees(5))
    for g, pairs in preimages.items():
        assert pairs == [decompose(g)]


def test_last_child_of_root_is_second_factor():
    g1, g2 = decompose(FIVE_EDGE_TREE)
    assert g1 == EMPTY
    assert g2 == OrderedTree("11010010")


def test_encoding():
    assert encode_tree(EMPTY) == ""
    assert encode_tree(EDGE) == "10"
    for k in range(7):
        codes = [encode_tree(t) for t in enumerate_trees(k)]
        assert len(set(codes)) == len(codes)
        assert all(len(c) == 2 * k for c in codes)
        assert [decode_tree(c) for c in codes] == enumerate_trees(k)


def test_from_children_round_trip():
    v = OrderedTree.from_children([EMPTY, EMPTY])
    u = OrderedTree.from_children([v, EMPTY])
    assert OrderedTree.from_children([u]) == FIVE_EDGE_TREE
    assert FIVE_EDGE_TREE.subtrees() == (u,)


def test_frame_of_empty_tree():
    frame = build_frame(EMPTY)
    assert len(frame.vertices) == 1
    assert frame.edges == ()


def test_vertex_with_two_children_has_three_frame_copies():
    g = FIVE_EDGE_TREE
    frame = build_frame(g)
    # v is the vertex whose two children are leaves
    v = next(w for w in range(g.node_count)
             if len(g.children[w]) == 2 and all(not g.children[c] for c in g.children[w]))
    copies = frame.copies(v)
    assert len(copies) == 3
    assert [frame.association[p] for p in copies] == [v, v, v]
    assert copies == (2, 4, 6)


@given(trees())
def test_frame_counts(g):
    k = g.edge_count
    frame = build_frame(g)
    assert len(frame.vertices) == 2 * k + 1
    assert len(frame.edges) == 2 * k
    sizes = sorted(frame.association.count(v) for v in range(g.node_count))
    assert sizes == sorted(len(g.children[v]) + 1 for v in range(g.node_count))
    for w in range(1, g.node_count):
        assert frame.edge_association.count(w) == 2
    assert frame.association[0] == frame.association[-1] == 0


def test_summation_graph_of_empty_tree():
    (sg,) = summation_graphs(EMPTY)
    assert sg.edges == ()
    comp = classify_components(sg)
    assert comp.path == (0,)
    assert comp.path_length == 0
    assert comp.cycles == ()


def test_single_edge_graphs_loop_or_path():
    loop_graph, path_graph = summation_graphs(EDGE)
    assert loop_graph.choices == (0,)
    assert (1, 1) in loop_graph.edges
    comp = classify_components(loop_graph)
    assert comp.path == (0, 2)
    assert comp.cycles == ((1,),)
    comp = classify_components(path_graph)
    assert comp.path == (0, 1, 2)
    assert comp.cycles == ()


def test_example_summation_graph_has_one_path_and_three_cycles():
    frame = build_frame(FIVE_EDGE_TREE)
    sg = summation_graph(frame, (1, 0, 0, 1, 0))
    comp = classify_components(sg)
    assert comp.path == (0, 9, 7, 1, 10)
    assert comp.cycles == ((2, 6, 5, 4), (3,), (8,))


@pytest.mark.parametrize("k", range(0, 6))
def test_every_summation_graph_classifies(k):
    for g in enumerate_trees(k):
        graphs = summation_graphs(g)
        assert len(graphs) == 2**k
        frame = build_frame(g)
        for sg in graphs:
            assert len(sg.edges) == 2 * k
            comp = classify_components(sg)
            assert comp.path[0] == 0 and comp.path[-1] == 2 * k
            assert len(comp.cycles) <= k
            covered = sorted(list(comp.path) + [p for c in comp.cycles for p in c])
            assert covered == list(frame.vertices)
            member = {p: i for i, c in enumerate([comp.path, *comp.cycles]) for p in c}
            for v in range(g.node_count):
                assert len({member[p] for p in frame.copies(v)}) == 1


def test_cycle_count_distribution_for_three_edges():
    # every choice vector of every 3-edge tree; 40 graphs in total
    counts = {}
    for g in enumerate_trees(3):
        for sg in summation_graphs(g):
            m = len(classify_components(sg).cycles)
            counts[m] = counts.get(m, 0) + 1
    assert sum(counts.values()) == 5 * 8
    assert max(counts) <= 3


def test_malformed_summation_graph_detected():
    frame = build_frame(EDGE)
    bad = summation_graph(frame, (1,))
    broken = type(bad)(frame, bad.choices, ((0, 1), (0, 2)))
    with pytest.raises(StructureError):
        classify_components(broken)


def test_bad_choice_vector():
    with pytest.raises(ValidationError):
        summation_graph(build_frame(EDGE), (2,))
    with pytest.raises(ValidationError):
        summation_graph(build_frame(EDGE), (0, 1))


@settings(max_examples=50)
@given(trees(6))
def test_structure_consistency(g):
    assert g.node_count == g.edge_count + 1
    assert sum(len(c) for c in g.children) == g.edge_count
    for w in range(1, g.node_count):
        assert w in g.children[g.parent[w]]
        assert g.children[g.parent[w]][g.position(w) - 1] == w


def test_itertools_order_of_choices():
    graphs = summation_graphs(OrderedTree("1100"))
    assert [sg.choices for sg in graphs] == list(itertools.product((0, 1), repeat=2))
