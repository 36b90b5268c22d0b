from fractions import Fraction as F

import pytest

from rankone import (
    EmptyTargets,
    EscalationExhausted,
    GaugeSpec,
    PerturbationSpec,
    Schedule,
    StagePolicy,
    TargetSets,
    build_schedule,
    enumerate_ratios,
    perturbation_schedule,
)


class TestTargetSets:
    def test_rejects_overlap(self):
        with pytest.raises(ValueError):
            TargetSets(singular=(F(3, 2), F(2)), dissipative=(F(2),))

    def test_rejects_at_most_one(self):
        with pytest.raises(ValueError):
            TargetSets(singular=(F(1),))
        with pytest.raises(ValueError):
            TargetSets(singular=(F(3, 2),), dissipative=(F(1, 2),))

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            TargetSets(singular=(F(3, 2), F(3, 2)))

    def test_default_entry_stages(self):
        t = TargetSets(singular=(F(3, 2),), dissipative=(F(2), F(3)))
        assert t.entry_stage(F(2)) == 2
        assert t.entry_stage(F(3)) == 3

    def test_explicit_entry_stages(self):
        t = TargetSets(
            singular=(F(3, 2),),
            dissipative=(F(2),),
            entry_stages=((F(2), 4),),
        )
        assert t.entry_stage(F(2)) == 4


class TestEnumerateRatios:
    def test_two_ratios_five_stages(self):
        got = enumerate_ratios((F(3, 2), F(5, 2)), 5)
        assert got == (F(3, 2), F(3, 2), F(5, 2), F(3, 2), F(5, 2))

    def test_single_ratio(self):
        assert enumerate_ratios((F(2),), 3) == (F(2), F(2), F(2))

    def test_three_ratios_six_stages(self):
        got = enumerate_ratios((F(3, 2), F(5, 2), F(7, 2)), 6)
        assert got == (F(3, 2), F(3, 2), F(5, 2), F(3, 2), F(5, 2), F(7, 2))

    def test_every_prefix_entry_recurs(self):
        # entry i (1-based) has appeared twice once i(i+3)/2 stages exist
        vals = tuple(F(k + 2) / 1 for k in range(4))
        for i in range(1, 5):
            j_max = i * (i + 3) // 2
            got = enumerate_ratios(vals, j_max)
            assert got.count(vals[i - 1]) >= 2

    def test_empty_rejected(self):
        with pytest.raises(EmptyTargets):
            enumerate_ratios((), 3)


class TestBuildExample:
    def test_two_stage_gauge_ten(self, tiny):
        st = tiny.stage(1)
        assert st.spacers == (F(0), F(10), F(1, 2), F(100))
        assert tiny.height(2) == F(229, 2)
        assert st.offsets == (F(0), F(1), F(12), F(27, 2))

    def test_no_certified_windows(self, tiny):
        assert tiny.certified_windows() == []


class TestScheduleInvariants:
    def test_height_recurrence(self, desk):
        for j in range(1, desk.num_stages):
            st = desk.stage(j)
            assert desk.height(j + 1) == 4 * st.height + sum(st.spacers)

    def test_offset_recurrence(self, desk):
        for j in range(1, desk.num_stages + 1):
            st = desk.stage(j)
            h, s = st.height, st.spacers
            assert st.offsets[0] == 0
            assert st.offsets[1] == h + s[0]
            assert st.offsets[2] == 2 * h + s[0] + s[1]
            assert st.offsets[3] == 3 * h + s[0] + s[1] + s[2]
            assert st.offsets[3] + h + s[3] == desk.height(j + 1)

    def test_width_rule(self, desk):
        for j in range(1, desk.num_stages + 1):
            assert desk.width(j) == F(4) ** (1 - j)

    def test_spacer_formulas(self, desk):
        for j in range(1, desk.num_stages + 1):
            st = desk.stage(j)
            assert st.spacers[0] == st.delta1 == 0
            assert st.spacers[2] == (st.ratio - 1) * st.height

    def test_gauge_growth(self, desk):
        g = desk.policy.gauge
        for j in range(1, desk.num_stages + 1):
            st = desk.stage(j)
            assert st.spacers[1] / st.height >= g.value(j)
            assert st.spacers[3] / st.spacers[1] >= g.value(j)

    def test_tower_measure_growth(self, desk):
        # mu(X_{j+1}) = mu(X_j) + w_{j+1} * sum(spacers); unbounded on the prefix
        for j in range(1, desk.num_stages):
            st = desk.stage(j)
            assert desk.tower_measure(j + 1) == desk.tower_measure(j) + desk.width(
                j + 1
            ) * sum(st.spacers)
        assert desk.tower_measure(desk.num_stages) > 2**desk.num_stages

    def test_ratio_trace_matches_enumeration(self, desk):
        assert desk.ratio_trace == enumerate_ratios((F(3, 2), F(5, 2)), 8)


class TestDeterminismAndSerialization:
    def test_tampered_schedule_rejected(self, desk):
        from rankone.exactnum import rat_str

        d = desk.to_dict()
        # an internally consistent stage whose height breaks the chain
        h, c, m = F(999), F(5, 2), F(16)
        sp = (F(0), m * h, (c - 1) * h, m * m * h)
        off = (F(0), h + sp[0], 2 * h + sp[0] + sp[1], 3 * h + sp[0] + sp[1] + sp[2])
        st = d["stages"][2]
        st["height"] = rat_str(h)
        st["spacers"] = [rat_str(x) for x in sp]
        st["offsets"] = [rat_str(x) for x in off]
        st["multiplier"] = rat_str(m)
        with pytest.raises(ValueError, match="stacking recurrence"):
            Schedule.from_dict(d)

    def test_rebuild_identical(self, desk):
        again = build_schedule(
            1, 1, TargetSets(singular=(F(3, 2), F(5, 2)), dissipative=(F(2), F(3))), 8
        )
        assert again == desk
        assert again.to_json() == desk.to_json()

    def test_json_round_trip(self, desk_perturbed):
        back = Schedule.from_json(desk_perturbed.to_json())
        assert back == desk_perturbed
        assert back.to_json() == desk_perturbed.to_json()


class TestPerturbationSchedule:
    def test_net_points_depth_one(self):
        pts = PerturbationSpec(net_depth=1).points()
        assert len(pts) == 9
        assert pts[:4] == ((F(0), F(0)), (F(0), F(1, 2)), (F(0), F(1)), (F(1, 2), F(0)))

    def test_base_mode_all_zero(self, desk):
        for j in range(1, desk.num_stages + 1):
            assert desk.delta_pair(j) == (0, 0)

    def test_row_major_assignment_per_ratio(self):
        assign = perturbation_schedule((F(3, 2), F(5, 2)), 12, 1)
        ratios = enumerate_ratios((F(3, 2), F(5, 2)), 12)
        stages_c1 = [j for j in range(1, 13) if ratios[j - 1] == F(3, 2)]
        got = [assign[j] for j in stages_c1[:4]]
        assert got == [(F(0), F(0)), (F(0), F(1, 2)), (F(0), F(1)), (F(1, 2), F(0))]

    def test_deltas_land_in_stages(self, desk_perturbed):
        for j in range(1, desk_perturbed.num_stages + 1):
            st = desk_perturbed.stage(j)
            assert st.spacers[0] == st.delta1
            assert st.spacers[2] == (st.ratio - 1) * st.height + st.delta3
            assert 0 <= st.delta1 <= 1 and 0 <= st.delta3 <= 1


class TestEscalation:
    def test_impossible_entry_exhausts(self):
        targets = TargetSets(
            singular=(F(3, 2), F(5, 2)),
            dissipative=(F(2),),
            entry_stages=((F(2), 1),),
        )
        with pytest.raises(EscalationExhausted) as exc:
            build_schedule(1, 1, targets, 6, policy=StagePolicy(max_retries=2))
        assert exc.value.stage == 1
        assert not exc.value.witness.is_empty()

    def test_low_gauge_escalates_then_passes(self):
        # a tiny starting gauge forces at least one escalation before passing
        targets = TargetSets(singular=(F(3, 2), F(5, 2)), dissipative=(F(2), F(3)))
        policy = StagePolicy(gauge=GaugeSpec(kind="table", values=(F(2),) * 8))
        sched = build_schedule(1, 1, targets, 6, policy=policy)
        assert sched.num_stages == 6
        # rebuilt deterministically
        again = build_schedule(1, 1, targets, 6, policy=policy)
        assert again == sched
