from __future__ import annotations

import pytest

from gcforge.graph import ConnectivityError, Graph, grid_graph, ParameterError
from gcforge.propagation import (
    PlacementFormatError,
    closeness_centrality,
    init_kernel,
    most_central_vertex,
    parse_placements,
    placement_report,
    propagate,
    refine,
    resolve_workers,
    serialize_placements,
)
from gcforge.translations import KernelPlacement, ZERO_SCORE

from conftest import connected_er_graphs, path_graph, star_graph


class TestCentrality:
    def test_path(self, path3):
        assert closeness_centrality(path3) == [1 / 3, 1 / 2, 1 / 3]

    def test_triangle(self, k3):
        assert closeness_centrality(k3) == [1 / 2, 1 / 2, 1 / 2]

    def test_star_center_most_central(self):
        g = star_graph(4)  # center 0, leaves 1..3
        c = closeness_centrality(g)
        assert c[0] == 1 / 3
        assert all(x == 1 / 5 for x in c[1:])

    def test_disconnected_rejected(self):
        with pytest.raises(ConnectivityError):
            closeness_centrality(Graph(4, [(0, 1), (2, 3)]))

    def test_most_central_path(self, path3):
        assert most_central_vertex(path3) == 1

    def test_most_central_ties_to_smallest_id(self, k3):
        assert most_central_vertex(k3) == 0

    def test_most_central_star_with_late_center(self):
        g = Graph(4, [(3, 0), (3, 1), (3, 2)])
        assert most_central_vertex(g) == 3


class TestInitKernel:
    def test_path_center(self, path3):
        p = init_kernel(path3, 1)
        assert p.slots == (1, 0, 2)
        assert p.accumulated == ZERO_SCORE

    def test_grid_interior_is_plus(self):
        g = grid_graph(4, 4)
        p = init_kernel(g, 5)
        assert p.slots == (5, 1, 4, 6, 9)
        assert p.k == 5

    def test_radius_zero(self, path3):
        p = init_kernel(path3, 1, radius=0)
        assert p.slots == (1,)

    def test_radius_two_orders_by_hop_then_id(self):
        g = path_graph(5)
        p = init_kernel(g, 2, radius=2)
        assert p.slots == (2, 1, 3, 0, 4)

    def test_center_out_of_range(self, path3):
        with pytest.raises(ParameterError):
            init_kernel(path3, 7)


class TestPropagate:
    def test_path_placements(self, path3):
        pm = propagate(path3, init_kernel(path3, 1))
        assert pm.placements[1].slots == (1, 0, 2)
        assert pm.placements[1].accumulated.total == 0.0
        # border placements are the rigid shifts: the slot that falls off
        # the end is lost, the survivor keeps its displacement
        assert pm.placements[0].slots == (0, None, 1)
        assert pm.placements[0].accumulated.total == 1.0
        assert pm.placements[2].slots == (2, 1, None)
        assert pm.placements[2].accumulated.total == 1.0

    def test_grid_interior_placements_are_rigid_and_free(self):
        g = grid_graph(4, 4)
        pm = propagate(g, init_kernel(g, most_central_vertex(g)))
        for v in (5, 6, 9, 10):
            p = pm.placements[v]
            assert p.accumulated.total == 0.0
            r, c = divmod(v, 4)
            assert p.slots == (v, v - 4, v - 1, v + 1, v + 4)

    def test_k1_kernel_covers_everything_for_free(self):
        g = grid_graph(3, 3)
        pm = propagate(g, init_kernel(g, 4, radius=0))
        assert all(pm.placements[v].slots == (v,) for v in range(9))
        assert all(pm.placements[v].accumulated.total == 0.0 for v in range(9))

    def test_disconnected_rejected(self):
        g = Graph(4, [(0, 1), (2, 3)])
        with pytest.raises(ConnectivityError):
            propagate(g, KernelPlacement(center=0, slots=(0, 1), accumulated=ZERO_SCORE))

    def test_every_placement_satisfies_invariants(self):
        for g in connected_er_graphs(3, 16, 0.25, 1000):
            pm = propagate(g, init_kernel(g, most_central_vertex(g)))
            assert pm.is_complete()
            for v, p in pm.placements.items():
                assert p.center == v and p.slots[0] == v
                live = [s for s in p.slots if s is not None]
                assert len(set(live)) == len(live)
                assert p.accumulated.losses == p.loss_count

    def test_refine_is_identity_on_output(self):
        for g in connected_er_graphs(2, 20, 0.2, 2000):
            pm = propagate(g, init_kernel(g, most_central_vertex(g)))
            assert refine(g, pm) == pm

    def test_worker_counts_agree(self):
        g = connected_er_graphs(1, 20, 0.2, 3000)[0]
        kernel = init_kernel(g, most_central_vertex(g))
        texts = {
            w: serialize_placements(propagate(g, kernel, workers=w)) for w in (1, 2, 8)
        }
        assert texts[1] == texts[2] == texts[8]

    def test_gcf_threads_caps_workers(self, monkeypatch):
        monkeypatch.setenv("GCF_THREADS", "2")
        assert resolve_workers(8) == 2
        monkeypatch.delenv("GCF_THREADS")
        assert resolve_workers(8) == 8
        monkeypatch.setenv("GCF_THREADS", "junk")
        with pytest.raises(ParameterError):
            resolve_workers(4)


class TestReport:
    def test_path_report(self, path3):
        pm = propagate(path3, init_kernel(path3, 1))
        rep = placement_report(pm)
        assert rep.complete_count == 1
        assert rep.vertex_count == 3
        assert dict(rep.score_histogram) == {0.0: 1, 1.0: 2}

    def test_grid_4x4_has_four_complete(self):
        g = grid_graph(4, 4)
        pm = propagate(g, init_kernel(g, most_central_vertex(g)))
        rep = placement_report(pm)
        assert rep.complete_count == 4

    def test_k1_kernel_all_complete(self):
        g = grid_graph(3, 3)
        pm = propagate(g, init_kernel(g, 4, radius=0))
        rep = placement_report(pm)
        assert rep.complete_count == 9
        assert "loss-free placements: 9 of 9" in rep.render()


class TestSerialization:
    def test_round_trip_bytes(self, path3):
        pm = propagate(path3, init_kernel(path3, 1))
        text = serialize_placements(pm)
        assert serialize_placements(parse_placements(text)) == text

    def test_round_trip_equality_on_er(self):
        g = connected_er_graphs(1, 15, 0.3, 4000)[0]
        pm = propagate(g, init_kernel(g, most_central_vertex(g)))
        assert parse_placements(serialize_placements(pm)) == pm

    def test_loss_symbol_renders(self, path3):
        pm = propagate(path3, init_kernel(path3, 1))
        assert "slot1=⊥" in serialize_placements(pm)

    def test_parse_errors_carry_line_numbers(self):
        with pytest.raises(PlacementFormatError, match="line 2"):
            parse_placements("# c\nbogus header\n")
        good = "3 3 1 1.0 1.0\n1; 0.0; slot0=1, slot1=0, slot2=2\n"
        assert parse_placements(good).placements[1].slots == (1, 0, 2)
        with pytest.raises(PlacementFormatError, match="line 2"):
            parse_placements("3 3 1 1.0 1.0\n9; 0.0; slot0=9, slot1=0, slot2=2\n")
        with pytest.raises(PlacementFormatError, match="slot"):
            parse_placements("3 3 1 1.0 1.0\n1; 0.0; slot0=1, slotX=0, slot2=2\n")
        with pytest.raises(PlacementFormatError, match="inconsistent"):
            parse_placements("3 3 1 1.0 1.0\n1; 0.5; slot0=1, slot1=0, slot2=2\n")
        with pytest.raises(PlacementFormatError, match="inconsistent"):
            # total below the loss cost alone implies negative violations
            parse_placements("3 3 1 1.0 1.0\n1; 0.0; slot0=1, slot1=⊥, slot2=2\n")
        with pytest.raises(PlacementFormatError, match="duplicate"):
            parse_placements(
                "3 3 1 1.0 1.0\n"
                "1; 0.0; slot0=1, slot1=0, slot2=2\n"
                "1; 0.0; slot0=1, slot1=0, slot2=2\n"
            )

    def test_empty_input(self):
        with pytest.raises(PlacementFormatError, match="header"):
            parse_placements("# just a comment\n")
