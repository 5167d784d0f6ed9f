import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synapcount.errors import DimensionMismatchError
from synapcount.detect import (
    AnalysisConfig,
    analyze,
    assign_to_dendrites,
    colocalization_mask,
    connected_components,
    density_per_100_micron,
    filter_components,
    inhibition_percentage,
    mean_count,
    run_analysis,
)
from synapcount.images import GrayImage
from synapcount.traces import DendriteTrace, Mask, TraceSet, rasterize_tube

from oracles import flood_fill_components
from synthgen import make_neuron


def _mask(rows):
    arr = np.asarray(rows, dtype=bool)
    return Mask(arr.shape[1], arr.shape[0], arr)


def _gray(rows):
    arr = np.asarray(rows, dtype=np.uint8)
    return GrayImage(arr.shape[1], arr.shape[0], 8, arr)


class TestColocalizationMask:
    def test_zero_thresholds_give_back_region(self):
        region = _mask([[1, 0], [0, 1]])
        red = _gray([[0, 0], [0, 0]])
        green = _gray([[0, 0], [0, 0]])
        assert colocalization_mask(red, green, region, 0, 0) == region

    def test_dim_red_channel_gives_empty_mask(self):
        region = _mask([[1, 1], [1, 1]])
        red = _gray([[0, 0], [0, 0]])
        green = _gray([[255, 255], [255, 255]])
        assert colocalization_mask(red, green, region, 255, 0).count() == 0

    def test_rowwise_case_matches_per_pixel_predicate(self):
        region = _mask(np.ones((3, 3)))
        red = _gray(np.full((3, 3), 200))
        green = _gray([[0] * 3, [128] * 3, [255] * 3])
        got = colocalization_mask(red, green, region, 100, 128)
        # brute-force predicate oracle
        expected = np.zeros((3, 3), bool)
        for j in range(3):
            for i in range(3):
                expected[j, i] = (
                    region.bits[j, i]
                    and red.pixels[j, i] >= 100
                    and green.pixels[j, i] >= 128
                )
        assert np.array_equal(got.bits, expected)
        assert not got.bits[0].any() and got.bits[1:].all()

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            colocalization_mask(
                _gray([[0]]), _gray([[0, 0]]), _mask([[1]]), 0, 0
            )

    def test_rejects_16bit_input(self):
        img16 = GrayImage(1, 1, 16, [3000])
        with pytest.raises(ValueError, match="8-bit"):
            colocalization_mask(img16, _gray([[0]]), _mask([[1]]), 0, 0)

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_threshold_monotonicity(self, data):
        h = data.draw(st.integers(1, 8))
        w = data.draw(st.integers(1, 8))
        rng = np.random.default_rng(data.draw(st.integers(0, 10_000)))
        red = _gray(rng.integers(0, 256, (h, w)))
        green = _gray(rng.integers(0, 256, (h, w)))
        region = Mask(w, h, rng.random((h, w)) < 0.7)
        t_r = data.draw(st.integers(0, 255))
        t_g = data.draw(st.integers(0, 255))
        t_r2 = data.draw(st.integers(t_r, 255))
        t_g2 = data.draw(st.integers(t_g, 255))
        loose = colocalization_mask(red, green, region, t_r, t_g)
        tight = colocalization_mask(red, green, region, t_r2, t_g2)
        assert not (tight.bits & ~loose.bits).any()


class TestConnectedComponents:
    def test_empty_mask(self):
        cs = connected_components(_mask(np.zeros((4, 4))))
        assert cs.count == 0 and cs.components == ()

    def test_full_3x3_block(self):
        cs = connected_components(_mask(np.ones((3, 3))))
        assert cs.count == 1
        comp = cs.components[0]
        assert comp.area == 9
        assert comp.centroid == (1.5, 1.5)
        assert comp.bbox == (0, 0, 2, 2)

    def test_diagonal_pair_depends_on_connectivity(self):
        m = _mask([[1, 0], [0, 1]])
        assert connected_components(m, 8).count == 1
        assert connected_components(m, 4).count == 2

    def test_labels_follow_raster_discovery_order(self):
        m = _mask(
            [
                [0, 0, 1, 0],
                [1, 0, 1, 0],
                [0, 0, 0, 1],
            ]
        )
        cs = connected_components(m, 4)
        assert cs.labels[0, 2] == 1  # first pixel found in raster order
        assert cs.labels[1, 0] == 2
        assert cs.labels[2, 3] == 3

    def test_invalid_connectivity(self):
        with pytest.raises(ValueError, match="connectivity"):
            connected_components(_mask([[1]]), 6)

    @pytest.mark.parametrize("connectivity", [4, 8])
    def test_matches_flood_fill_oracle_on_randoms(self, connectivity):
        rng = np.random.default_rng(1234 + connectivity)
        for _ in range(120):
            h = int(rng.integers(1, 33))
            w = int(rng.integers(1, 33))
            density = rng.uniform(0.1, 0.9)
            bits = rng.random((h, w)) < density
            cs = connected_components(Mask(w, h, bits), connectivity)
            oracle_labels, oracle_comps = flood_fill_components(bits, connectivity)
            assert cs.count == len(oracle_comps)
            # identical discovery order makes the label rasters equal outright
            assert np.array_equal(cs.labels, oracle_labels)
            assert [c.area for c in cs.components] == [c["area"] for c in oracle_comps]
            for mine, ref in zip(cs.components, oracle_comps):
                assert mine.centroid == pytest.approx(ref["centroid"], abs=1e-9)

    def test_deterministic_across_runs(self):
        rng = np.random.default_rng(7)
        bits = rng.random((40, 40)) < 0.5
        a = connected_components(Mask(40, 40, bits), 8)
        b = connected_components(Mask(40, 40, bits), 8)
        assert a.count == b.count
        assert np.array_equal(a.labels, b.labels)
        assert a.components == b.components

    def test_count_areas_centroids_invariant_under_relabeling(self):
        rng = np.random.default_rng(21)
        bits = rng.random((24, 24)) < 0.4
        cs = connected_components(Mask(24, 24, bits), 8)
        permutation = rng.permutation(cs.count) + 1
        relabeled = np.zeros_like(cs.labels)
        relabeled[cs.labels > 0] = permutation[cs.labels[cs.labels > 0] - 1]
        # the measured quantities do not depend on which label a blob wears
        areas_by_label = [int((relabeled == permutation[c.id - 1]).sum()) for c in cs.components]
        assert areas_by_label == [c.area for c in cs.components]
        assert sorted(areas_by_label) == sorted(c.area for c in cs.components)


class TestFilterComponents:
    def test_min_area_one_is_identity(self):
        cs = connected_components(_mask([[1, 0, 1]]))
        assert filter_components(cs, 1) is cs

    def test_drops_small_and_relabels(self):
        # areas 1, 5, 2 in discovery order
        m = _mask(
            [
                [1, 0, 1, 1, 0, 1],
                [0, 0, 1, 1, 0, 1],
                [0, 0, 1, 0, 0, 0],
            ]
        )
        cs = connected_components(m, 4)
        assert [c.area for c in cs.components] == [1, 5, 2]
        filtered = filter_components(cs, 2)
        assert filtered.count == 2
        assert [c.area for c in filtered.components] == [5, 2]
        assert [c.id for c in filtered.components] == [1, 2]
        assert set(np.unique(filtered.labels)) == {0, 1, 2}

    def test_all_below_min_area(self):
        cs = connected_components(_mask([[1, 0, 1]]))
        filtered = filter_components(cs, 2)
        assert filtered.count == 0
        assert not filtered.labels.any()


class TestAssignToDendrites:
    def _tube(self, trace, w=30, h=30, thickness=5.0):
        return rasterize_tube(trace, thickness, w, h)

    def test_single_dendrite_takes_everything(self):
        t = DendriteTrace(1, "a", ((2.0, 15.0), (27.0, 15.0)))
        traces = TraceSet((t,))
        cs = connected_components(_mask(np.pad(np.ones((2, 2)), ((14, 14), (5, 23)))))
        got = assign_to_dendrites(cs, [(1, self._tube(t))], traces)
        assert got == {1: [1]}

    def test_centroid_inside_one_tube(self):
        a = DendriteTrace(1, "a", ((2.0, 5.0), (27.0, 5.0)))
        b = DendriteTrace(2, "b", ((2.0, 25.0), (27.0, 25.0)))
        traces = TraceSet((a, b))
        bits = np.zeros((30, 30), bool)
        bits[24:27, 10:13] = True  # on dendrite b
        cs = connected_components(Mask(30, 30, bits))
        got = assign_to_dendrites(cs, [(1, self._tube(a)), (2, self._tube(b))], traces)
        assert got == {1: [], 2: [1]}

    def test_overlap_tie_breaks_to_lowest_id(self):
        # two dendrites crossing at (15, 15); component centered right there
        a = DendriteTrace(1, "a", ((0.0, 15.0), (30.0, 15.0)))
        b = DendriteTrace(2, "b", ((15.0, 0.0), (15.0, 30.0)))
        traces = TraceSet((a, b))
        bits = np.zeros((30, 30), bool)
        bits[14:17, 14:17] = True
        cs = connected_components(Mask(30, 30, bits))
        got = assign_to_dendrites(
            cs, [(1, self._tube(a)), (2, self._tube(b))], traces
        )
        assert got == {1: [1], 2: []}

    def test_outside_all_tubes_goes_to_nearest_polyline(self):
        a = DendriteTrace(1, "a", ((2.0, 5.0), (27.0, 5.0)))
        b = DendriteTrace(2, "b", ((2.0, 25.0), (27.0, 25.0)))
        traces = TraceSet((a, b))
        bits = np.zeros((30, 30), bool)
        bits[20, 10] = True  # nearer to b (dist 4.5 vs 15.5)
        cs = connected_components(Mask(30, 30, bits))
        got = assign_to_dendrites(
            cs, [(1, self._tube(a, thickness=3.0)), (2, self._tube(b, thickness=3.0))], traces
        )
        assert got == {1: [], 2: [1]}

    def test_empty_tube_list_rejected(self):
        cs = connected_components(_mask([[1]]))
        with pytest.raises(ValueError, match="at least one"):
            assign_to_dendrites(cs, [], TraceSet((DendriteTrace(1, "a", ((0, 0),)),)))

    def test_partition_property_on_synthetic_neurons(self):
        for seed in (3, 17, 42):
            n = make_neuron(seed)
            detail = run_analysis(n.red, n.green, n.traces, n.config)
            assignment = assign_to_dendrites(
                detail.components, list(detail.tubes), n.traces
            )
            assigned = sorted(cid for ids in assignment.values() for cid in ids)
            assert assigned == [c.id for c in detail.components.components]


class TestScalarMetrics:
    def test_density_examples(self):
        assert density_per_100_micron(5, 100.0) == 5.0
        assert density_per_100_micron(12, 240.0) == 5.0
        assert density_per_100_micron(0, 50.0) == 0.0

    def test_density_rejects_nonpositive_length(self):
        with pytest.raises(ValueError, match="length"):
            density_per_100_micron(1, 0.0)

    def test_mean_count_examples(self):
        assert mean_count([5]) == 5.0
        assert mean_count([2, 4]) == 3.0

    def test_mean_count_matches_summation_oracle(self):
        rng = np.random.default_rng(99)
        counts = rng.integers(0, 40, 13).tolist()
        total = 0.0
        for c in counts:  # independent brute-force sum
            total += c
        assert mean_count(counts) == pytest.approx(total / 13, rel=1e-12)

    def test_mean_count_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            mean_count([])

    def test_inhibition_reported_in_study(self):
        # automatic counts: 26.03 control vs 16.50 treated -> 36.61%
        assert inhibition_percentage(26.03, 16.50) == pytest.approx(36.61, abs=0.01)

    def test_inhibition_trivial_cases(self):
        assert inhibition_percentage(4.2, 4.2) == 0.0
        assert inhibition_percentage(20, 10) == 50.0

    def test_inhibition_rejects_nonpositive_control(self):
        with pytest.raises(ValueError, match="control"):
            inhibition_percentage(0.0, 1.0)


class TestAnalysisConfig:
    def test_threshold_bounds(self):
        with pytest.raises(ValueError, match="threshold_red"):
            AnalysisConfig(scale=1, thickness=1, threshold_red=300, threshold_green=0)

    def test_mode_values(self):
        with pytest.raises(ValueError, match="mode"):
            AnalysisConfig(
                scale=1, thickness=1, threshold_red=0, threshold_green=0, mode="both"
            )

    def test_thickness_px(self):
        cfg = AnalysisConfig(scale=0.09, thickness=0.9, threshold_red=0, threshold_green=0)
        assert cfg.thickness_px == pytest.approx(10.0)


def _explicit_planted_neuron():
    """The 7-planted / 3-off-tube / 2-red-only fixture, built by hand."""
    width = height = 120
    trace = DendriteTrace(1, "d1", ((10.0, 60.0), (110.0, 60.0)))
    traces = TraceSet((trace,))
    rng = np.random.default_rng(5)
    red = rng.integers(0, 50, (height, width)).astype(np.uint8)
    green = rng.integers(0, 50, (height, width)).astype(np.uint8)

    def disc(channel, cx, cy, value):
        for j in range(height):
            for i in range(width):
                if (i + 0.5 - cx) ** 2 + (j + 0.5 - cy) ** 2 <= 4.0:
                    channel[j, i] = value

    planted = [(20, 59), (32, 61), (45, 60), (58, 58), (70, 62), (85, 60), (100, 59)]
    for x, y in planted:
        disc(red, x, y, 220)
        disc(green, x, y, 220)
    for x, y in [(20, 20), (60, 100), (100, 15)]:  # colocalized but off-tube
        disc(red, x, y, 220)
        disc(green, x, y, 220)
    for x, y in [(26, 60), (92, 61)]:  # red-only on-tube
        disc(red, x, y, 220)
    config = AnalysisConfig(
        scale=0.1,
        thickness=1.0,  # 10 px tube
        threshold_red=120,
        threshold_green=120,
        mode="per-dendrite",
    )
    return (
        GrayImage(width, height, 8, red),
        GrayImage(width, height, 8, green),
        traces,
        config,
        len(planted),
    )


class TestAnalyze:
    def test_blank_red_channel_counts_nothing(self):
        width = height = 40
        red = GrayImage(width, height, 8, np.zeros((height, width), np.uint8))
        green = GrayImage(width, height, 8, np.full((height, width), 255, np.uint8))
        traces = TraceSet((DendriteTrace(1, "d", ((5.0, 20.0), (35.0, 20.0))),))
        cfg = AnalysisConfig(
            scale=0.1, thickness=0.5, threshold_red=1, threshold_green=1,
            mode="per-dendrite",
        )
        rep = analyze(red, green, traces, cfg)
        assert rep.overall.synapse_count == 0
        assert rep.overall.density_per_100um == 0.0
        assert all(r.synapse_count == 0 for r in rep.per_dendrite)

    def test_seven_planted_puncta_recovered(self):
        red, green, traces, config, planted = _explicit_planted_neuron()
        rep = analyze(red, green, traces, config)
        assert rep.overall.synapse_count == planted == 7

    def test_thresholds_above_intensity_count_zero(self):
        red, green, traces, config, _ = _explicit_planted_neuron()
        from dataclasses import replace

        high = replace(config, threshold_red=250, threshold_green=250)
        assert analyze(red, green, traces, high).overall.synapse_count == 0

    def test_candidates_confined_to_region(self):
        n = make_neuron(8)
        detail = run_analysis(n.red, n.green, n.traces, n.config)
        assert not (detail.candidates.bits & ~detail.region.bits).any()

    def test_per_dendrite_counts_partition_global(self):
        for seed in range(6):
            n = make_neuron(seed)
            rep = analyze(n.red, n.green, n.traces, n.config)
            assert sum(r.synapse_count for r in rep.per_dendrite) == rep.overall.synapse_count

    def test_global_mode_has_no_per_dendrite_rows(self):
        n = make_neuron(2, mode="global")
        rep = analyze(n.red, n.green, n.traces, n.config)
        assert rep.per_dendrite == ()

    def test_pure_function_of_inputs(self):
        n = make_neuron(11)
        a = analyze(n.red, n.green, n.traces, n.config, inputs={"red": "r.tif"})
        b = analyze(n.red, n.green, n.traces, n.config, inputs={"red": "r.tif"})
        assert a == b

    def test_global_length_is_sum_of_trace_lengths(self):
        from synapcount.traces import trace_length_px

        n = make_neuron(4)
        rep = analyze(n.red, n.green, n.traces, n.config)
        assert rep.overall.length_px == pytest.approx(
            sum(trace_length_px(t) for t in n.traces.traces)
        )

    def test_single_point_trace_has_na_density(self):
        width = height = 20
        blank = GrayImage(width, height, 8, np.zeros((height, width), np.uint8))
        traces = TraceSet((DendriteTrace(1, "dot", ((10.0, 10.0),)),))
        cfg = AnalysisConfig(
            scale=0.1, thickness=0.5, threshold_red=10, threshold_green=10
        )
        rep = analyze(blank, blank, traces, cfg)
        assert rep.overall.length_um == 0.0
        assert rep.overall.density_per_100um is None

    def test_dimension_mismatch_rejected(self):
        a = GrayImage(4, 4, 8, np.zeros((4, 4), np.uint8))
        b = GrayImage(5, 4, 8, np.zeros((4, 5), np.uint8))
        traces = TraceSet((DendriteTrace(1, "d", ((1.0, 1.0),)),))
        cfg = AnalysisConfig(scale=1, thickness=1, threshold_red=0, threshold_green=0)
        with pytest.raises(DimensionMismatchError):
            analyze(a, b, traces, cfg)

    def test_out_of_frame_trace_noted_in_warnings(self):
        img = GrayImage(10, 10, 8, np.zeros((10, 10), np.uint8))
        traces = TraceSet((DendriteTrace(1, "d", ((5.0, 5.0), (40.0, 5.0))),))
        cfg = AnalysisConfig(scale=1, thickness=2, threshold_red=0, threshold_green=0)
        rep = analyze(img, img, traces, cfg)
        assert any("beyond the image bounds" in w for w in rep.warnings)
        assert rep.overall.length_px == 35.0  # full polyline, not clipped

    def test_16bit_inputs_normalized_before_thresholding(self):
        width = height = 16
        arr = np.zeros((height, width), np.uint16)
        arr[7:10, 6:9] = 60000  # ~233 after full-range normalization
        img = GrayImage(width, height, 16, arr)
        traces = TraceSet((DendriteTrace(1, "d", ((2.0, 8.0), (14.0, 8.0))),))
        cfg = AnalysisConfig(scale=1, thickness=6, threshold_red=200, threshold_green=200)
        assert analyze(img, img, traces, cfg).overall.synapse_count == 1
