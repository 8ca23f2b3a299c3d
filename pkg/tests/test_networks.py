import math

import numpy as np
import pytest

from booltn.experiment import generate_ground_truth
from booltn.factorization import FactorizationParams, Solver
from booltn.networks import (
    ALGORITHMS,
    HT,
    TT,
    TUCKER,
    TensorNetwork,
    TopologyError,
    census,
    contract,
    decompose,
    dumps_btnet,
    error_rate,
    hierarchical_tucker,
    iterative_tucker,
    loads_btnet,
    read_btnet,
    recursive_tucker,
    split_tt,
    tensor_train,
    tt_network,
    tucker_network,
    write_btnet,
)
from booltn.tensor import BooleanTensor, ShapeError, bool_matmul, hamming

from conftest import rand_bits

QUICK = FactorizationParams(n_states=2, rand_dur=1, l_c=2, l_h=4)


def quick_solver(seed=0):
    return Solver("sa", seed=seed, num_reads=10, sweeps=30)


def einsum_tt(nodes):
    """Independent TT reconstruction through integer einsum."""
    out = nodes[0].astype(np.int64)
    for n in nodes[1:]:
        out = np.tensordot(out, n.astype(np.int64), axes=([-1], [0]))
    return (out > 0).astype(np.uint8)


class TestSplit:
    def test_recursive_halves_order_eight(self):
        info = split_tt(np.zeros((2,) * 8), True, 3)
        assert info.split_point == 4 and info.d1 == 16 and info.d2 == 16
        assert info.dims1 == (2,) * 4 and info.dims2 == (2,) * 4

    def test_iterative_without_rank_mode(self):
        info = split_tt(np.zeros((4, 4, 4, 4)), False, 3)
        assert info.split_point == 1 and (info.d1, info.d2) == (4, 64)

    def test_iterative_with_leading_rank_mode(self):
        info = split_tt(np.zeros((3, 4, 4)), False, 3)
        assert info.split_point == 2 and info.dims1 == (3, 4) and info.dims2 == (4,)

    def test_recursive_keeps_rank_modes_outside_the_halving(self):
        info = split_tt((3, 4, 4, 4, 4, 3), True, 3)
        assert info.split_point == 3
        assert info.d1 * info.d2 == 3 * 4**4 * 3

    def test_explicit_flags_override_guess(self):
        assert split_tt((3, 3, 3), False, 3, lead=False, trail=False).split_point == 1

    def test_errors(self):
        with pytest.raises(ShapeError):
            split_tt((4,), True, 2)
        with pytest.raises(ShapeError):
            split_tt((3, 4, 3), True, 3)


class TestContract:
    def test_single_node(self, rng):
        x = rand_bits(rng, (3, 4))
        net = TensorNetwork(TT, [x], ["tt-car"], [], [(0, 0), (0, 1)], (3, 4))
        assert contract(net).array.tolist() == x.tolist()

    def test_two_matrices_is_matmul(self, rng):
        a, b = rand_bits(rng, (5, 2)), rand_bits(rng, (2, 6))
        assert contract(tt_network([a, b])) == bool_matmul(BooleanTensor.from_array(a),
                                                           BooleanTensor.from_array(b))

    def test_tt_matches_einsum(self, rng):
        for d in range(2, 7):
            nodes = [rand_bits(rng, (3, 2))] + [rand_bits(rng, (2, 3, 2))] * (d - 2) + [rand_bits(rng, (2, 3))]
            assert np.array_equal(contract(tt_network(nodes)).array, einsum_tt(nodes))

    def test_tucker_matches_einsum(self, rng):
        core = rand_bits(rng, (2, 3, 2))
        fs = [rand_bits(rng, (4, 2)), rand_bits(rng, (5, 3)), rand_bits(rng, (3, 2))]
        expect = np.einsum("abc,ia,jb,kc->ijk", core, *fs) > 0
        assert np.array_equal(contract(tucker_network(core, fs)).array, expect)

    def test_output_order_follows_outputs(self, rng):
        a, b = rand_bits(rng, (3, 2)), rand_bits(rng, (2, 4))
        net = TensorNetwork(TT, [a, b], ["tt-car"] * 2, [((0, 1), (1, 0))], [(1, 1), (0, 0)], (4, 3))
        assert np.array_equal(contract(net).array, (a.astype(int) @ b).T > 0)

    @pytest.mark.parametrize("kind", ["tt", "tucker", "ht"])
    def test_generated_networks_have_target_shape(self, kind):
        for order in range(2, 7):
            net, T = generate_ground_truth(kind, order, 3, 2, seed=order)
            net.validate()
            assert T.dims == (3,) * order
            assert contract(net) == T

    def test_topology_errors(self, rng):
        a, b = rand_bits(rng, (3, 2)), rand_bits(rng, (3, 4))
        with pytest.raises(TopologyError, match="size"):
            TensorNetwork(TT, [a, b], ["tt-car"] * 2, [((0, 1), (1, 0))], [(0, 0), (1, 1)], (3, 4)).validate()
        with pytest.raises(TopologyError, match="dangling"):
            TensorNetwork(TT, [a], ["tt-car"], [], [(0, 0)], (3,)).validate()
        with pytest.raises(TopologyError, match="used by both"):
            TensorNetwork(TT, [a], ["tt-car"], [], [(0, 0), (0, 0), (0, 1)], (3, 3, 2)).validate()
        with pytest.raises(TopologyError):
            contract(TensorNetwork(TT, [a], ["nope"], [], [(0, 0), (0, 1)], (3, 2)))


class TestErrorRate:
    def test_examples(self, rng):
        x = rand_bits(rng, (4, 4, 4, 4))
        T = BooleanTensor.from_array(x)
        assert error_rate(T, T) == 0.0
        assert error_rate(T, BooleanTensor.from_array(1 - x)) == 1.0
        y = x.copy()
        y[1, 2, 3, 0] ^= 1
        assert error_rate(T, BooleanTensor.from_array(y)) == 1 / 256

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            error_rate(np.zeros((2, 2)), np.zeros(4))

    def test_invariant_under_mode_permutation(self, rng):
        x, y = rand_bits(rng, (2, 3, 4)), rand_bits(rng, (2, 3, 4))
        perm = (2, 0, 1)
        assert error_rate(x, y) == error_rate(x.transpose(perm), y.transpose(perm))


def check_census(net, d):
    c = census(net)
    if net.kind == TT:
        assert (c["matrices"], c["order3"], c["higher"]) == (2, d - 2, 0)
        assert (c["tt-car"], c.get("tt-carriage", 0)) == (2, d - 2)
    elif net.kind == TUCKER:
        assert (c["tucker-core"], c["tucker-factor"], len(net.nodes)) == (1, d, d + 1)
        assert net.nodes[0].order() == d
    else:
        assert (c["ht-leaf"], c["ht-internal"], c["ht-root"]) == (d, d - 2, 1)
        assert c["matrices"] == d and c["order3"] == d - 1
        assert net.nodes[net.meta["root"]].dims[0] == 1


class TestDecompositions:
    @pytest.mark.parametrize("algo", ALGORITHMS)
    @pytest.mark.parametrize("d", [3, 4, 5])
    def test_structure(self, algo, d, rng):
        T = rand_bits(rng, (3,) * d)
        net = decompose(T, algo, 2, quick_solver(), QUICK)
        net.validate()
        check_census(net, d)
        assert contract(net).dims == T.shape
        assert net.rank == 2 and net.meta["algorithm"] == algo

    @pytest.mark.parametrize("algo", ALGORITHMS)
    def test_exact_on_rank_one_outer_product(self, algo, rng):
        vecs = [np.ones(3, dtype=np.uint8)] + [np.array([1, 0, 1], dtype=np.uint8)] * 3
        x = np.einsum("i,j,k,l->ijkl", *vecs).astype(np.uint8)
        net = decompose(x, algo, 1, Solver("exhaustive"))
        assert hamming(contract(net), BooleanTensor.from_array(x)) == 0

    def test_order_three_tt_nodes(self, rng):
        net = tensor_train(rand_bits(rng, (4, 4, 4)), False, 2, quick_solver(), QUICK)
        assert [n.dims for n in net.nodes] == [(4, 2), (2, 4, 2), (2, 4)]

    def test_tt_variants_share_node_shapes(self, rng):
        x = rand_bits(rng, (4, 4, 4, 4))
        a = tensor_train(x, True, 3, quick_solver(), QUICK)
        b = tensor_train(x, False, 3, quick_solver(), QUICK)
        assert [n.dims for n in a.nodes] == [n.dims for n in b.nodes]

    def test_iterative_tucker_shapes(self, rng):
        core, factors = iterative_tucker(rand_bits(rng, (4, 4, 4, 4)), 3, quick_solver(), QUICK)
        assert core.dims == (3, 3, 3, 3)
        assert [f.dims for f in factors] == [(4, 3)] * 4

    def test_tucker_of_identity_cube(self):
        x = np.zeros((2, 2, 2), dtype=np.uint8)
        x[0, 0, 0] = x[1, 1, 1] = 1
        core, factors = iterative_tucker(x, 2, Solver("exhaustive"))
        for f in factors:
            assert sorted(map(tuple, f.array)) == [(0, 1), (1, 0)]
        assert hamming(contract(tucker_network(core, factors)), BooleanTensor.from_array(x)) == 0

    def test_recursive_tucker_order_four_splits_once(self, rng):
        x = rand_bits(rng, (4, 4, 4, 4))
        net = decompose(x, "tr", 3, quick_solver(), QUICK)
        assert net.meta["depth"] == 2
        core, factors = recursive_tucker(x, 3, quick_solver(), 4, QUICK)
        assert core.order() == 4 and len(factors) == 4

    def test_recursive_tucker_below_min_order_is_iterative(self, rng):
        x = rand_bits(rng, (3, 3, 3))
        a = decompose(x, "tr", 2, quick_solver(1), QUICK, min_rec_ord=4)
        b = decompose(x, "ti", 2, quick_solver(1), QUICK)
        assert [n.array.tolist() for n in a.nodes] == [n.array.tolist() for n in b.nodes]

    def test_odd_min_rec_ord(self, rng):
        with pytest.raises(ValueError):
            recursive_tucker(rand_bits(rng, (3, 3, 3, 3)), 2, quick_solver(), 3)

    def test_ht_order_two(self, rng):
        net = hierarchical_tucker(rand_bits(rng, (4, 5)), 2, quick_solver(), params=QUICK)
        assert sorted(n.dims for n in net.nodes) == [(1, 2, 2), (4, 2), (5, 2)]

    def test_ht_order_four(self, rng):
        net = hierarchical_tucker(rand_bits(rng, (4, 4, 4, 4)), 3, quick_solver(), params=QUICK)
        cores = sorted(n.dims for n, role in zip(net.nodes, net.roles) if role == "ht-core")
        assert cores == [(1, 3, 3), (3, 3, 3), (3, 3, 3)]
        assert [n.dims for n, role in zip(net.nodes, net.roles) if role == "ht-leaf"] == [(4, 3)] * 4

    @pytest.mark.parametrize("d", [3, 4, 5, 6, 7, 8])
    def test_recursion_depth(self, d, rng):
        x = rand_bits(rng, (2,) * d)
        params = FactorizationParams(n_states=0, l_c=1, l_h=1)
        solver = Solver("sa", num_reads=2, sweeps=5)
        for algo in ("ttr", "tr", "ht"):
            assert decompose(x, algo, 2, solver, params).meta["depth"] <= math.ceil(math.log2(d)) + 1
        for algo in ("tti", "ti"):
            assert decompose(x, algo, 2, solver, params).meta["depth"] <= d

    def test_unknown_algorithm(self, rng):
        with pytest.raises(ValueError):
            decompose(rand_bits(rng, (2, 2, 2)), "cp", 2, quick_solver())


class TestBtnet:
    @pytest.mark.parametrize("kind", ["tt", "tucker", "ht"])
    def test_roundtrip(self, kind, tmp_path):
        net, T = generate_ground_truth(kind, 4, 3, 2, seed=5)
        back = loads_btnet(dumps_btnet(net))
        assert back.kind == net.kind and back.roles == net.roles
        assert back.edges == net.edges and back.outputs == net.outputs
        assert all(a == b for a, b in zip(back.nodes, net.nodes))
        write_btnet(tmp_path / "n.btnet", net)
        assert contract(read_btnet(tmp_path / "n.btnet")) == T
        assert dumps_btnet(back) == dumps_btnet(net)

    def test_kinds(self):
        assert {generate_ground_truth(k, 3, 2, 2, 0)[0].kind for k in ("tt", "tucker", "ht")} == {TT, TUCKER, HT}

    @pytest.mark.parametrize("text", ["{}", "not json", '{"kind": "TT", "nodes": [{"role": "tt-car", '
                                      '"dims": [2, 2], "bits": "!!"}], "edges": [], "outputs": [], "target_dims": []}'])
    def test_rejects_malformed(self, text):
        with pytest.raises(TopologyError):
            loads_btnet(text)

    def test_rejects_bad_topology(self):
        net, _ = generate_ground_truth("tt", 3, 2, 2, seed=1)
        net.edges = net.edges[:1]
        with pytest.raises(TopologyError):
            loads_btnet(dumps_btnet(net))
