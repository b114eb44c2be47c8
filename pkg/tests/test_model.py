import numpy as np
import pytest

from gnnasim import fixed32 as fx
from gnnasim import graph as gm
from gnnasim import model as mm
from gnnasim.errors import ConfigError

from conftest import random_graph, random_layer, scalar_gru


def identity_gcn(n_dims):
    w = mm.WeightSet(w_feature=np.eye(n_dims))
    return mm.LayerSpec(mm.ModelKind.GCN, n_dims, n_dims, w)


class TestGcnEdgeNorm:
    def test_isolated_vertex_self_loop(self):
        prog = mm.gcn_edge_norm(gm.from_edges(1, [], []))
        assert prog.num_edges == 1
        assert prog.src.tolist() == [0] and prog.dst.tolist() == [0]
        assert prog.coef[0] == pytest.approx(1.0)

    def test_two_cycle_all_half(self):
        g = gm.from_edges(2, [0, 1], [1, 0])
        prog = mm.gcn_edge_norm(g)
        assert prog.num_edges == 4  # two edges plus two self-loops
        assert np.allclose(prog.coef, 0.5)

    def test_star_center_coefficient(self):
        # brute-force degree count: edge 1->0 gets 1/sqrt((out(1)+1)*(in(0)+1))
        g = gm.from_edges(4, [1, 2, 3], [0, 0, 0])
        prog = mm.gcn_edge_norm(g)
        pick = (prog.src == 1) & (prog.dst == 0)
        assert prog.coef[pick][0] == pytest.approx(1.0 / np.sqrt(4 * 2))

    def test_matches_dense_degree_oracle(self, rng):
        for _ in range(10):
            g = random_graph(rng, n_max=20)
            prog = mm.gcn_edge_norm(g)
            a = np.zeros((g.num_vertices, g.num_vertices))
            np.add.at(a, (g.src, g.dst), 1.0)
            a += np.eye(g.num_vertices)
            d_out = a.sum(axis=1)
            d_in = a.sum(axis=0)
            for s, d, c in zip(prog.src, prog.dst, prog.coef):
                assert c == pytest.approx(1.0 / np.sqrt(d_out[s] * d_in[d]))


class TestFeatureExtraction:
    def test_gcn_identity_weights(self, rng):
        g = gm.from_edges(3, [0, 1], [1, 2])
        x = rng.uniform(-1, 1, (3, 4))
        msgs = mm.feature_extraction(identity_gcn(4), mm.PropertyMatrix(x), g)
        assert np.allclose(msgs.vertex_values, x)

    def test_gspool_zero_weights_bias_only(self):
        g = gm.from_edges(2, [0], [1])
        w = mm.WeightSet(
            w_pool=np.zeros((3, 3)), b_pool=np.ones(3), w_update=np.zeros((6, 3))
        )
        layer = mm.LayerSpec(mm.ModelKind.GS_POOL, 3, 3, w)
        x = mm.PropertyMatrix(np.full((2, 3), -2.0))
        msgs = mm.feature_extraction(layer, x, g)
        assert np.allclose(msgs.vertex_values, 1.0)

    def test_gcn_5_to_3_matches_oracle(self, rng):
        g = gm.from_edges(4, [2, 3, 0, 1, 2], [0, 0, 1, 2, 3])
        layer = random_layer(rng, mm.ModelKind.GCN, f=5, h=3, seed=11)
        x = mm.PropertyMatrix(rng.uniform(-1, 1, (4, 5)))
        got = mm.forward_layer(layer, x, g)
        want = mm.dense_oracle(layer, x, g)
        assert np.abs(got.data - want.data).max() < 1e-12

    def test_dimension_mismatch(self, rng):
        g = gm.from_edges(2, [0], [1])
        with pytest.raises(ConfigError):
            mm.feature_extraction(identity_gcn(4), mm.PropertyMatrix(np.ones((2, 3))), g)


class TestAggregate:
    def test_sum_empty_edges_all_zero(self):
        g = gm.from_edges(3, [], [])
        layer = identity_gcn(2)
        prog = mm.EdgeProgram(np.array([], np.int64), np.array([], np.int64))
        msgs = mm.Messages(prog, vertex_values=np.ones((3, 2)))
        out = mm.aggregate(layer, msgs, g)
        assert np.array_equal(out, np.zeros((3, 2)))

    def test_trace_graph_incoming_sum(self, rng, trace_graph):
        # temp properties of vertices 2 and 3 reduce into vertex 0
        x = rng.uniform(-1, 1, (4, 3))
        prog = mm.EdgeProgram(trace_graph.src.copy(), trace_graph.dst.copy())
        layer = identity_gcn(3)
        out = mm.aggregate(layer, mm.Messages(prog, vertex_values=x), trace_graph)
        assert np.allclose(out[0], x[2] + x[3])

    def test_max_picks_largest(self):
        g = gm.from_edges(4, [0, 1, 2], [3, 3, 3])
        w = mm.WeightSet(
            w_pool=np.eye(1), b_pool=np.zeros(1), w_update=np.zeros((2, 1))
        )
        layer = mm.LayerSpec(mm.ModelKind.GS_POOL, 1, 1, w)
        vals = np.array([[3.0], [-1.0], [7.5], [-100.0]])
        prog = mm.EdgeProgram(g.src.copy(), g.dst.copy())
        msgs = mm.Messages(prog, vertex_values=vals, max_init=vals)
        out = mm.aggregate(layer, msgs, g)
        assert out[3, 0] == 7.5

    def test_max_is_permutation_invariant(self, rng):
        g = random_graph(rng, n_max=16)
        layer = random_layer(rng, mm.ModelKind.GS_POOL, seed=5)
        x = mm.PropertyMatrix(rng.uniform(-1, 1, (g.num_vertices, layer.f)))
        msgs = mm.feature_extraction(layer, x, g)
        base = mm.aggregate(layer, msgs, g)
        perm = rng.permutation(msgs.program.num_edges)
        shuffled = mm.Messages(
            mm.EdgeProgram(msgs.program.src[perm], msgs.program.dst[perm]),
            vertex_values=msgs.vertex_values,
            max_init=msgs.max_init,
        )
        # re-sort canonically as the loader would
        order = np.lexsort([shuffled.program.src, shuffled.program.dst])
        resorted = mm.Messages(
            mm.EdgeProgram(shuffled.program.src[order], shuffled.program.dst[order]),
            vertex_values=msgs.vertex_values,
            max_init=msgs.max_init,
        )
        assert np.array_equal(mm.aggregate(layer, resorted, g), base)

    def test_mean_divides_by_in_degree(self):
        g = gm.from_edges(3, [0, 1], [2, 2])
        w = mm.WeightSet(
            w_pool=np.eye(2), b_pool=np.zeros(2), w_update=np.zeros((4, 2))
        )
        layer = mm.LayerSpec(mm.ModelKind.GS_POOL, 2, 2, w, mm.Aggregator.MEAN)
        x = np.array([[2.0, 0.0], [4.0, 2.0], [9.0, 9.0]])
        prog = mm.EdgeProgram(g.src.copy(), g.dst.copy())
        out = mm.aggregate(layer, mm.Messages(prog, vertex_values=x), g)
        assert np.allclose(out[2], [3.0, 1.0])
        assert np.allclose(out[0], 0.0)  # no incoming edges -> 0


class TestUpdate:
    def test_gcn_relu_of_zero(self):
        layer = identity_gcn(3)
        out = mm.update(layer, np.zeros((4, 3)), mm.PropertyMatrix(np.ones((4, 3))))
        assert np.array_equal(out.data, np.zeros((4, 3)))

    def test_grn_half_gate(self, rng):
        # zero gate weights: z = r = 0.5, candidate = tanh(0) = 0, out = h/2
        h = 4
        gru = mm.GruWeights(*[np.zeros((h, h)) if i % 3 != 2 else np.zeros(h) for i in range(9)])
        w = mm.WeightSet(w_feature=np.zeros((h, h)), gru=gru)
        layer = mm.LayerSpec(mm.ModelKind.GRN, h, h, w)
        x = mm.PropertyMatrix(rng.uniform(-1, 1, (3, h)))
        out = mm.update(layer, np.zeros((3, h)), x)
        assert np.allclose(out.data, 0.5 * x.data)


class TestGruCell:
    def test_all_zero(self):
        h = 3
        gru = mm.GruWeights(*[np.zeros((h, h)) if i % 3 != 2 else np.zeros(h) for i in range(9)])
        out = mm.gru_cell(np.zeros((2, h)), np.zeros((2, h)), gru)
        assert np.array_equal(out, np.zeros((2, h)))

    def test_update_gate_saturation(self, rng):
        h = 3
        gru = mm.GruWeights(
            w_z=np.zeros((h, h)), u_z=np.zeros((h, h)), b_z=np.full(h, 50.0),
            w_r=np.zeros((h, h)), u_r=np.zeros((h, h)), b_r=np.zeros(h),
            w_h=np.eye(h), u_h=np.zeros((h, h)), b_h=np.zeros(h),
        )
        x = rng.uniform(-0.5, 0.5, (4, h))
        out = mm.gru_cell(rng.uniform(-1, 1, (4, h)), x, gru)
        assert np.abs(out - np.tanh(x)).max() < 1e-12

    def test_matches_scalar_oracle(self, rng):
        h = 4
        w = mm.seeded_weights(mm.ModelKind.GRN, h, h, seed=77).gru
        hid = rng.uniform(-1, 1, (6, h))
        x = rng.uniform(-1, 1, (6, h))
        got = mm.gru_cell(hid, x, w)
        assert np.abs(got - scalar_gru(hid, x, w)).max() < 1e-12

    def test_dimension_mismatch(self):
        h = 3
        gru = mm.GruWeights(*[np.zeros((h, h)) if i % 3 != 2 else np.zeros(h) for i in range(9)])
        with pytest.raises(ConfigError):
            mm.gru_cell(np.zeros((2, h)), np.zeros((2, h + 1)), gru)


class TestForwardLayer:
    def test_gcn_two_cycle_identity(self):
        # hand evaluation: every coefficient is 0.5, two incoming edges each
        g = gm.from_edges(2, [0, 1], [1, 0])
        out = mm.forward_layer(identity_gcn(3), mm.PropertyMatrix(np.ones((2, 3))), g)
        assert np.allclose(out.data, 1.0)

    def test_fau_afu_agree_float(self, rng):
        for _ in range(10):
            g = random_graph(rng, n_max=32)
            layer = random_layer(rng, mm.ModelKind.GCN)
            x = mm.PropertyMatrix(rng.uniform(-1, 1, (g.num_vertices, layer.f)))
            fau = mm.forward_layer(layer, x, g, mm.StageOrder.FAU)
            afu = mm.forward_layer(layer, x, g, mm.StageOrder.AFU)
            assert np.abs(fau.data - afu.data).max() <= 1e-9

    def test_gspool_rejects_afu(self, rng):
        g = gm.from_edges(2, [0], [1])
        layer = random_layer(rng, mm.ModelKind.GS_POOL, f=8, h=512, seed=3)
        x = mm.PropertyMatrix(np.ones((2, 8)))
        with pytest.raises(ConfigError):
            mm.forward_layer(layer, x, g, mm.StageOrder.AFU)

    def test_fixed_point_bit_identical_across_runs(self, rng):
        g = random_graph(rng, n_max=24)
        layer = random_layer(rng, mm.ModelKind.GCN)
        x = mm.PropertyMatrix.from_float(
            rng.uniform(-1, 1, (g.num_vertices, layer.f)), fixed=True
        )
        a = mm.forward_layer(layer, x, g)
        b = mm.forward_layer(layer, x, g)
        assert np.array_equal(a.data, b.data)
        assert a.data.dtype == np.int32


class TestDenseOracle:
    def test_gcn_identity_case(self):
        g = gm.from_edges(2, [0, 1], [1, 0])
        out = mm.dense_oracle(identity_gcn(3), mm.PropertyMatrix(np.ones((2, 3))), g)
        assert np.allclose(out.data, 1.0)

    @pytest.mark.parametrize(
        "kind",
        [mm.ModelKind.GCN, mm.ModelKind.GS_POOL, mm.ModelKind.RGCN,
         mm.ModelKind.GATED_GCN, mm.ModelKind.GRN],
    )
    def test_engine_matches_oracle(self, rng, kind):
        for _ in range(8):
            g = random_graph(rng, n_max=32, with_relations=kind is mm.ModelKind.RGCN)
            layer = random_layer(rng, kind)
            x = mm.PropertyMatrix(rng.uniform(-1, 1, (g.num_vertices, layer.f)))
            got = mm.forward_layer(layer, x, g)
            want = mm.dense_oracle(layer, x, g)
            assert np.abs(got.data - want.data).max() <= 1e-9

    def test_fixed_error_bound(self, rng):
        for _ in range(8):
            g = random_graph(rng, n_max=32)
            layer = random_layer(rng, mm.ModelKind.GCN)
            xf = rng.uniform(-1, 1, (g.num_vertices, layer.f))
            got = mm.forward_layer(layer, mm.PropertyMatrix.from_float(xf, fixed=True), g)
            want = mm.dense_oracle(layer, mm.PropertyMatrix(xf), g)
            assert np.abs(got.to_float() - want.data).max() <= 1e-2

    def test_size_limit(self):
        g = gm.from_edges(mm.ORACLE_MAX_VERTICES + 1, [0], [1])
        layer = identity_gcn(2)
        with pytest.raises(ConfigError):
            mm.dense_oracle(layer, mm.PropertyMatrix(np.ones((g.num_vertices, 2))), g)


class TestWeightFiles:
    def test_binary_roundtrip(self, tmp_path, rng):
        w = rng.uniform(-1, 1, (5, 3)).astype(np.float32).astype(np.float64)
        path = tmp_path / "w.bin"
        mm.save_weight_matrix(path, w, binary=True)
        assert np.array_equal(mm.load_weight_matrix(path), w)

    def test_text_roundtrip(self, tmp_path, rng):
        w = rng.uniform(-1, 1, (4, 6))
        path = tmp_path / "w.txt"
        mm.save_weight_matrix(path, w, binary=False)
        assert np.allclose(mm.load_weight_matrix(path), w, atol=0)

    def test_truncated_binary(self, tmp_path):
        path = tmp_path / "w.bin"
        mm.save_weight_matrix(path, np.ones((4, 4)))
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(Exception):
            mm.load_weight_matrix(path)


class TestLayerSpecValidation:
    def test_wrong_aggregator(self):
        w = mm.WeightSet(w_feature=np.eye(2))
        with pytest.raises(ConfigError):
            mm.LayerSpec(mm.ModelKind.GCN, 2, 2, w, mm.Aggregator.MAX)

    def test_wrong_weight_shape(self):
        w = mm.WeightSet(w_feature=np.eye(3))
        with pytest.raises(ConfigError):
            mm.LayerSpec(mm.ModelKind.GCN, 2, 2, w)

    def test_gspool_mean_allowed(self):
        w = mm.WeightSet(
            w_pool=np.zeros((2, 3)), b_pool=np.zeros(3), w_update=np.zeros((5, 3))
        )
        layer = mm.LayerSpec(mm.ModelKind.GS_POOL, 2, 3, w, mm.Aggregator.MEAN)
        assert layer.aggregator is mm.Aggregator.MEAN
