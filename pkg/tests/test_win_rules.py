"""Win-rule unit tests: oracle agreement, invariants, hand-built cases."""

import math

import numpy as np
import pytest

from recwin import errors
from recwin.core_data import Arm, Dataset, SubjectHistory
from recwin.win_rules import (
    PairCounts,
    PairOutcome,
    WinRule,
    count_wins,
    evaluate,
    pair_sums,
    shared_horizon,
    win_loss_block,
    ArmArrays,
)

from conftest import random_dataset, random_history
from oracle_win_rules import classify

RULES = list(WinRule)


def hist(ident, arm, times=(), censor=3.0, death=None, **cov):
    return SubjectHistory(
        id=ident,
        arm=arm,
        recurrent_times=tuple(times),
        censor_time=censor,
        death_time=death,
        covariates=cov,
    )


E, C = Arm.EXPERIMENTAL, Arm.CONTROL


# ---------------------------------------------------------------------------
# hand-built cases
# ---------------------------------------------------------------------------

class TestHandBuiltPairs:
    def test_earlier_death_loses_under_every_rule(self):
        e = hist("e", E, censor=3.0)
        c = hist("c", C, censor=3.0, death=1.0)
        for rule in RULES:
            assert evaluate(rule, e, c, 1.0) is PairOutcome.TREATED_WIN

    def test_death_after_horizon_is_invisible(self):
        # control dies at 2.5 but the pair horizon is 2.0: no death win
        e = hist("e", E, censor=2.0)
        c = hist("c", C, censor=3.0, death=2.5)
        assert evaluate(WinRule.NWR, e, c, 2.0) is PairOutcome.TIE

    def test_fewer_recurrences_wins_nwr(self):
        e = hist("e", E, times=(1.0,))
        c = hist("c", C, times=(0.5, 1.5))
        assert evaluate(WinRule.NWR, e, c, 3.0) is PairOutcome.TREATED_WIN

    def test_swr_ignores_counts_uses_first_time(self):
        # treated has more events but a later first event: SWR win
        e = hist("e", E, times=(1.0, 1.5, 2.0))
        c = hist("c", C, times=(0.5,))
        assert evaluate(WinRule.SWR, e, c, 3.0) is PairOutcome.TREATED_WIN
        assert evaluate(WinRule.NWR, e, c, 3.0) is PairOutcome.CONTROL_WIN

    def test_equal_counts_fwr_breaks_on_first(self):
        e = hist("e", E, times=(1.0, 2.5))
        c = hist("c", C, times=(0.5, 2.8))
        assert evaluate(WinRule.FWR, e, c, 3.0) is PairOutcome.TREATED_WIN
        assert evaluate(WinRule.NWR, e, c, 3.0) is PairOutcome.TIE

    def test_equal_counts_lwr_breaks_on_last(self):
        # same first-event ordering, opposite last-event ordering
        e = hist("e", E, times=(1.0, 2.5))
        c = hist("c", C, times=(0.5, 2.8))
        assert evaluate(WinRule.LWR, e, c, 3.0) is PairOutcome.CONTROL_WIN

    def test_zero_zero_counts_tie_under_count_rules(self):
        e = hist("e", E)
        c = hist("c", C)
        for rule in RULES:
            assert evaluate(rule, e, c, 3.0) is PairOutcome.TIE

    def test_exactly_equal_times_tie(self):
        e = hist("e", E, times=(1.0,))
        c = hist("c", C, times=(1.0,))
        for rule in RULES:
            assert evaluate(rule, e, c, 3.0) is PairOutcome.TIE

    def test_event_after_horizon_not_counted(self):
        # control's second event falls beyond the shared horizon
        e = hist("e", E, times=(1.0,), censor=2.0)
        c = hist("c", C, times=(0.5, 2.5), censor=3.0)
        assert evaluate(WinRule.NWR, e, c, 2.0) is PairOutcome.TIE
        # common count is 1 at the horizon; treated's single event is later
        assert evaluate(WinRule.LWR, e, c, 2.0) is PairOutcome.TREATED_WIN

    def test_horizon_mismatch_rejected(self):
        e = hist("e", E, censor=2.0)
        c = hist("c", C, censor=3.0)
        with pytest.raises(errors.HorizonMismatch):
            evaluate(WinRule.LWR, e, c, 3.0)

    def test_shared_horizon(self):
        e = hist("e", E, censor=2.0)
        c = hist("c", C, censor=3.0, death=2.5)
        assert shared_horizon(e, c) == 2.0


# ---------------------------------------------------------------------------
# oracle equivalence and invariants on random pairs
# ---------------------------------------------------------------------------

class TestOracleAgreement:
    @pytest.mark.parametrize("rule", RULES)
    def test_scalar_matches_oracle(self, rule, rng):
        for i in range(1500):
            e = random_history(rng, f"e{i}", E)
            c = random_history(rng, f"c{i}", C)
            tau = shared_horizon(e, c)
            assert evaluate(rule, e, c, tau).value == classify(rule, e, c)

    @pytest.mark.parametrize("rule", RULES)
    def test_block_sweep_matches_scalar(self, rule, rng):
        data = random_dataset(rng, 40, 35)
        exp, ctl = data.by_arm()
        win, loss = win_loss_block(rule, ArmArrays(exp), ArmArrays(ctl))
        for i, e in enumerate(exp):
            for j, c in enumerate(ctl):
                out = evaluate(rule, e, c, shared_horizon(e, c))
                assert win[i, j] == (out is PairOutcome.TREATED_WIN)
                assert loss[i, j] == (out is PairOutcome.CONTROL_WIN)

    @pytest.mark.parametrize("rule", RULES)
    def test_win_loss_mutually_exclusive(self, rule, rng):
        data = random_dataset(rng, 60, 60)
        exp, ctl = data.by_arm()
        win, loss = win_loss_block(rule, ArmArrays(exp), ArmArrays(ctl))
        assert not np.any(win & loss)

    @pytest.mark.parametrize("rule", RULES)
    def test_arm_swap_antisymmetry(self, rule, rng):
        for i in range(300):
            e = random_history(rng, f"e{i}", E)
            c = random_history(rng, f"c{i}", C)
            tau = shared_horizon(e, c)
            assert evaluate(rule, e, c, tau).value == -evaluate(rule, c, e, tau).value

    def test_single_recurrence_rule_coincidence(self, rng):
        # with at most one recurrence per subject SWR, FWR and LWR coincide
        def truncated(i, arm):
            s = random_history(rng, f"{arm.name}{i}", arm)
            return hist(
                s.id, arm, s.recurrent_times[:1], s.censor_time, s.death_time
            )

        for i in range(400):
            e, c = truncated(i, E), truncated(i, C)
            tau = shared_horizon(e, c)
            outs = {r: evaluate(r, e, c, tau) for r in RULES}
            assert outs[WinRule.SWR] == outs[WinRule.FWR] == outs[WinRule.LWR]


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

class TestCountWins:
    def test_counts_match_double_loop(self, rng):
        data = random_dataset(rng, 25, 20)
        exp, ctl = data.by_arm()
        counts = count_wins(data, WinRule.LWR)
        outs = [evaluate(WinRule.LWR, e, c, shared_horizon(e, c)) for e in exp for c in ctl]
        assert counts.n_pairs == len(exp) * len(ctl)
        assert counts.wins == sum(o is PairOutcome.TREATED_WIN for o in outs)
        assert counts.losses == sum(o is PairOutcome.CONTROL_WIN for o in outs)
        assert counts.ties == counts.n_pairs - counts.wins - counts.losses

    def test_pair_sums_row_col_totals_agree(self, rng):
        data = random_dataset(rng, 30, 25)
        exp, ctl = data.by_arm()
        sums = pair_sums(WinRule.LWR, exp, ctl, block=7)  # force multiple blocks
        assert sums.row_wins.sum() == sums.col_wins.sum()
        assert sums.row_losses.sum() == sums.col_losses.sum()

    def test_empty_arm_rejected(self, rng):
        subs = [random_history(rng, f"e{i}", E) for i in range(4)]
        with pytest.raises(errors.EmptyArm):
            count_wins(Dataset(tuple(subs)), WinRule.LWR)

    def test_stratified_pools_within_strata(self, rng):
        subs = []
        for i in range(40):
            s = random_history(rng, f"s{i}", E if i % 2 else C)
            subs.append(
                SubjectHistory(
                    id=s.id, arm=s.arm, recurrent_times=s.recurrent_times,
                    censor_time=s.censor_time, death_time=s.death_time,
                    covariates=s.covariates, stratum="a" if i < 20 else "b",
                )
            )
        data = Dataset(tuple(subs))
        pooled, per = count_wins(data, WinRule.LWR, stratified=True)
        assert set(per) == {"a", "b"}
        assert pooled == per["a"] + per["b"]
        # within-stratum pairing only: fewer pairs than the unmatched analysis
        assert pooled.n_pairs < count_wins(data, WinRule.LWR).n_pairs

    def test_single_arm_stratum_warns_and_contributes_nothing(self, rng):
        subs = [
            SubjectHistory(id="e1", arm=E, recurrent_times=(1.0,), censor_time=3.0,
                           covariates={}, stratum="a"),
            SubjectHistory(id="c1", arm=C, recurrent_times=(), censor_time=3.0,
                           covariates={}, stratum="a"),
            SubjectHistory(id="e2", arm=E, recurrent_times=(), censor_time=3.0,
                           covariates={}, stratum="b"),
        ]
        with pytest.warns(UserWarning, match="single arm"):
            pooled, per = count_wins(Dataset(tuple(subs)), WinRule.LWR, stratified=True)
        assert per["b"] == PairCounts(0, 0, 0, 0)

    def test_all_strata_single_arm_rejected(self):
        subs = [
            SubjectHistory(id="e1", arm=E, recurrent_times=(), censor_time=3.0,
                           covariates={}, stratum="a"),
            SubjectHistory(id="c1", arm=C, recurrent_times=(), censor_time=3.0,
                           covariates={}, stratum="b"),
        ]
        with pytest.warns(UserWarning):
            with pytest.raises(errors.AllStrataSingleArm):
                count_wins(Dataset(tuple(subs)), WinRule.LWR, stratified=True)
