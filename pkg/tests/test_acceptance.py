"""The eleven acceptance criteria. Each test prints one PASS/FAIL line, and
the lines are repeated in the terminal summary.

Criteria 1 to 7 are exact or oracle checks that take seconds. Criteria 8 to
11 share one learning study (five seeds, transfer arms and a skewed-scale
run) that takes tens of minutes on one core.
"""

import pytest

from seairl import verify


def _assert(check, criterion_log):
    criterion_log(check)
    assert check.passed, check.line()


def test_c01_variational_bound_never_exceeds_exact_mi(criterion_log):
    _assert(verify.check_variational_bound(cases=200), criterion_log)


def test_c02_em_converges_to_exact_mi(criterion_log):
    _assert(verify.check_em_convergence(cases=50, iters=50), criterion_log)


def test_c03_closed_form_beats_random_simplex_points(criterion_log):
    _assert(verify.check_analytic_solution(cases=100, points=10_000), criterion_log)


def test_c04_trained_discriminator_matches_closed_form(criterion_log):
    _assert(verify.check_discriminator_optimality(n_states=20), criterion_log)


def test_c05_all_losses_pass_finite_differences(criterion_log):
    _assert(verify.check_gradients(instances=20), criterion_log)


def test_c06_shaping_keeps_optimal_actions(criterion_log):
    _assert(verify.check_shaping_invariance(tables=20), criterion_log)


def test_c07_ablation_presets_reduce_exactly(criterion_log):
    _assert(verify.check_reduction_identities(), criterion_log)


@pytest.mark.slow
def test_c08_seairl_learns_the_two_scenario_grid(learning_study, criterion_log):
    _assert(verify.check_learning(learning_study["runs"]), criterion_log)


@pytest.mark.slow
def test_c09_finetuning_transfers_faster_than_scratch(learning_study, criterion_log):
    budget = learning_study["runs"][0].source.config.iterations
    _assert(verify.check_transfer(learning_study["transfers"], budget), criterion_log)


@pytest.mark.slow
def test_c10_posterior_segments_subtasks(learning_study, criterion_log):
    _assert(verify.check_segmentation(learning_study["runs"]), criterion_log)


@pytest.mark.slow
def test_c11_shaped_reward_scales_are_balanced(criterion_log):
    _assert(verify.check_reward_normalisation(seed=0), criterion_log)
