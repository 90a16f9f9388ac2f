"""Matrix restoration, restored propensity scores, and stratified effects."""

import numpy as np
import pytest

from effectrestore import (
    BinaryErrorParams,
    DegenerateStratumError,
    ErrorMatrix,
    IncompatibleModelError,
    JointTable,
    PositivityError,
    PropensityProfile,
    SingularError,
    ValidationError,
    adjust_for_confounder,
    causal_effect_restored,
    propensity_profile,
    pushforward,
    restore_joint,
    restore_joint_differential,
    restored_propensity,
    stratified_effect,
)


def random_table(rng, cards, axis="Z"):
    cells = rng.dirichlet(np.ones(int(np.prod(cards)))).reshape(cards)
    return JointTable(cells, axis)


def well_conditioned_mechanism(rng, n, mix=0.4):
    # diagonally dominated column-stochastic matrix: always invertible
    noise = rng.dirichlet(np.ones(n), size=n).T
    return ErrorMatrix(entries=(1.0 - mix) * np.eye(n) + mix * noise)


class TestRestoreJoint:
    def test_identity_mechanism_is_noop(self):
        rng = np.random.default_rng(1)
        table = random_table(rng, (2, 2, 3), axis="W")
        result = restore_joint(table, ErrorMatrix.identity(3))
        np.testing.assert_array_equal(result.restored.cells, table.cells)
        assert result.restored.axis == "Z"
        assert result.negative_mass == 0.0
        assert not result.clipped

    def test_roundtrip_recovers_ground_truth(self):
        # forward-multiplication oracle: exact by construction
        rng = np.random.default_rng(2)
        for _ in range(50):
            cards = tuple(rng.integers(1, 5, size=2)) + (int(rng.integers(2, 5)),)
            truth = random_table(rng, cards)
            mech = well_conditioned_mechanism(rng, cards[2])
            observed = pushforward(truth, mech)
            result = restore_joint(observed, mech)
            assert np.abs(result.restored.cells - truth.cells).max() < 1e-10
            assert result.condition_estimate >= 1.0

    def test_uninformative_binary_mechanism_raises(self):
        mech = ErrorMatrix(entries=np.array([[0.5, 0.5], [0.5, 0.5]]))
        table = JointTable(np.full((2, 2, 2), 1 / 8), "W")
        with pytest.raises(SingularError):
            restore_joint(table, mech)

    def test_condition_cap(self):
        eps = 0.5 - 1e-10
        mech = ErrorMatrix(entries=np.array([[1 - eps, eps], [eps, 1 - eps]]))
        table = JointTable(np.full((2, 2, 2), 1 / 8), "W")
        with pytest.raises(SingularError):
            restore_joint(table, mech)
        restore_joint(table, mech, cond_cap=1e12)

    def test_mass_conserved_per_treatment_outcome_pair(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            truth = random_table(rng, (3, 2, 4))
            mech = well_conditioned_mechanism(rng, 4)
            observed = pushforward(truth, mech)
            restored = restore_joint(observed, mech).restored
            np.testing.assert_allclose(
                restored.cells.sum(axis=2), observed.cells.sum(axis=2), atol=1e-12
            )

    def test_incompatible_data_raises_then_clips_on_request(self):
        err = BinaryErrorParams(0.3, 0.3)
        cells = np.full((2, 2, 2), 0.05)
        cells[1, 1] = [0.07, 0.63]  # P(w1|x=1,y=1) = 0.9, outside [delta, 1-eps]
        table = JointTable(cells, "W")
        mech = ErrorMatrix.from_binary(err)
        with pytest.raises(IncompatibleModelError):
            restore_joint(table, mech)
        result = restore_joint(table, mech, clip=True)
        assert result.clipped
        assert result.negative_mass > 1e-6
        assert result.restored.cells.min() >= 0.0
        np.testing.assert_allclose(
            result.restored.cells.sum(axis=2), table.cells.sum(axis=2), atol=1e-12
        )

    def test_tiny_negative_noise_is_clipped_silently(self):
        err = BinaryErrorParams(0.2, 0.1)
        cells = np.full((2, 2, 2), 1 / 8)
        # P(w1|x,y) a hair under delta: restored z1 cell goes slightly negative
        p_xy = 0.25
        cells[0, 0, 1] = (err.delta - 4e-9) * p_xy
        cells[0, 0, 0] = p_xy - cells[0, 0, 1]
        table = JointTable(cells, "W")
        result = restore_joint(table, ErrorMatrix.from_binary(err))
        assert result.clipped
        assert 0.0 < result.negative_mass < 1e-6
        assert result.restored.cells.min() >= 0.0

    def test_rectangular_mechanism_rejected(self):
        rect = ErrorMatrix(entries=np.array([[0.5, 0.1, 0.2], [0.5, 0.9, 0.8]]))
        table = JointTable(np.full((2, 2, 3), 1 / 12), "W")
        with pytest.raises(ValidationError):
            restore_joint(table, rect)

    def test_factored_path_matches_dense(self):
        rng = np.random.default_rng(4)
        errs = [BinaryErrorParams(0.15, 0.05), BinaryErrorParams(0.1, 0.2)]
        factors = tuple(ErrorMatrix.from_binary(e) for e in errs)
        factored = ErrorMatrix(factors=factors)
        from effectrestore import expand_factored

        dense = expand_factored(factors)
        truth = random_table(rng, (2, 2, 4))
        observed_f = pushforward(truth, factored)
        observed_d = pushforward(truth, dense)
        np.testing.assert_allclose(observed_f.cells, observed_d.cells, atol=1e-15)
        rf = restore_joint(observed_f, factored).restored.cells
        rd = restore_joint(observed_d, dense).restored.cells
        np.testing.assert_allclose(rf, rd, atol=1e-13)
        np.testing.assert_allclose(rf, truth.cells, atol=1e-12)

    def test_large_mechanism_uses_solve_path(self):
        # dimensions above the explicit-inverse threshold go through LU solves
        rng = np.random.default_rng(20)
        truth = random_table(rng, (2, 2, 12))
        mech = well_conditioned_mechanism(rng, 12)
        observed = pushforward(truth, mech)
        result = restore_joint(observed, mech)
        assert np.abs(result.restored.cells - truth.cells).max() < 1e-10

    def test_factored_path_beyond_dense_cap(self):
        # 13 binary components: 8192 latent cells, dense inversion forbidden
        rng = np.random.default_rng(5)
        errs = [
            BinaryErrorParams(rng.uniform(0, 0.2), rng.uniform(0, 0.2)) for _ in range(13)
        ]
        mech = ErrorMatrix(factors=tuple(ErrorMatrix.from_binary(e) for e in errs))
        truth = random_table(rng, (2, 1, 8192))
        observed = pushforward(truth, mech)
        restored = restore_joint(observed, mech).restored
        assert np.abs(restored.cells - truth.cells).max() < 1e-10


class TestRestoreJointDifferential:
    def test_equal_mechanisms_collapse_to_shared_restoration(self):
        rng = np.random.default_rng(6)
        mech = well_conditioned_mechanism(rng, 3)
        observed = pushforward(random_table(rng, (2, 2, 3)), mech)
        family = {(x, y): mech for x in range(2) for y in range(2)}
        a = restore_joint_differential(observed, family).restored.cells
        b = restore_joint(observed, mech).restored.cells
        np.testing.assert_allclose(a, b, atol=1e-15)

    def test_identity_family_is_noop(self):
        rng = np.random.default_rng(7)
        observed = random_table(rng, (2, 2, 3), axis="W")
        family = {(x, y): ErrorMatrix.identity(3) for x in range(2) for y in range(2)}
        result = restore_joint_differential(observed, family)
        np.testing.assert_array_equal(result.restored.cells, observed.cells)

    def test_matches_per_pair_solve_oracle(self):
        # oracle: independent 2x2 linear solve per (x, y) slice
        rng = np.random.default_rng(8)
        truth = random_table(rng, (2, 2, 2))
        m_a = ErrorMatrix.from_binary(BinaryErrorParams(0.1, 0.2))
        m_b = ErrorMatrix.from_binary(BinaryErrorParams(0.25, 0.05))
        family = {(0, 0): m_a, (0, 1): m_b, (1, 0): m_b, (1, 1): m_a}
        cells = np.stack(
            [
                [family[(x, y)].dense() @ truth.cells[x, y, :] for y in range(2)]
                for x in range(2)
            ]
        )
        observed = JointTable(cells, "W")
        restored = restore_joint_differential(observed, family).restored
        for (x, y), mech in family.items():
            expected = np.linalg.solve(mech.dense(), observed.cells[x, y, :])
            np.testing.assert_allclose(restored.cells[x, y, :], expected, atol=1e-12)
        np.testing.assert_allclose(restored.cells, truth.cells, atol=1e-12)

    def test_missing_pair_rejected(self):
        rng = np.random.default_rng(9)
        observed = random_table(rng, (2, 2, 2), axis="W")
        with pytest.raises(ValidationError):
            restore_joint_differential(observed, {(0, 0): ErrorMatrix.identity(2)})

    def test_singular_reported_with_pair(self):
        rng = np.random.default_rng(10)
        observed = random_table(rng, (2, 2, 2), axis="W")
        bad = ErrorMatrix(entries=np.array([[0.5, 0.5], [0.5, 0.5]]))
        family = {(x, y): ErrorMatrix.identity(2) for x in range(2) for y in range(2)}
        family[(1, 0)] = bad
        with pytest.raises(SingularError, match=r"x=1, y=0"):
            restore_joint_differential(observed, family)


class TestCausalEffectRestored:
    def test_identity_mechanism_reduces_to_plain_adjustment(self):
        rng = np.random.default_rng(11)
        observed = random_table(rng, (2, 3, 4), axis="W")
        for x in (0, 1):
            np.testing.assert_allclose(
                causal_effect_restored(observed, ErrorMatrix.identity(4), x),
                adjust_for_confounder(observed.with_axis("Z"), x),
                atol=1e-15,
            )

    def test_recovers_generating_model_effect_from_exact_observed(self):
        from effectrestore import binary_spec

        spec = binary_spec(
            0.4, [0.7, 0.2], [[0.2, 0.6], [0.5, 0.9]], BinaryErrorParams(0.2, 0.1)
        )
        observed = spec.joint_xyw()
        mech = spec.mechanism()
        for x in (0, 1):
            np.testing.assert_allclose(
                causal_effect_restored(observed, mech, x), spec.effect(x), atol=1e-10
            )


class TestRestoredPropensity:
    def test_identity_mechanism_is_noop(self):
        scores = np.array([0.3, 0.8, 0.5])
        p = np.array([0.2, 0.5, 0.3])
        out = restored_propensity(scores, p, ErrorMatrix.identity(3))
        np.testing.assert_allclose(out, scores, atol=1e-15)

    def test_constant_score_is_fixed_point(self):
        rng = np.random.default_rng(12)
        mech = well_conditioned_mechanism(rng, 4)
        p = rng.dirichlet(np.ones(4))
        out = restored_propensity(np.full(4, 0.37), p, mech)
        np.testing.assert_allclose(out, 0.37, atol=1e-12)

    def test_matches_restored_joint_conditional(self):
        # oracle: restore the joint, then condition by definition
        rng = np.random.default_rng(13)
        for _ in range(20):
            truth = random_table(rng, (2, 2, 4))
            mech = well_conditioned_mechanism(rng, 4)
            observed = pushforward(truth, mech)
            p_w = observed.cells.sum(axis=(0, 1))
            score_w = observed.cells[1].sum(axis=0) / p_w
            restored = restore_joint(observed, mech).restored
            expected = restored.cells[1].sum(axis=0) / restored.cells.sum(axis=(0, 1))
            out = restored_propensity(score_w, p_w, mech)
            np.testing.assert_allclose(out, expected, atol=1e-10)

    def test_vanishing_denominator_raises(self):
        err = BinaryErrorParams(0.2, 0.2)
        mech = ErrorMatrix.from_binary(err)
        p_w = np.array([0.8, 0.2])  # P(w1) == delta: restored z1 stratum empty
        with pytest.raises(DegenerateStratumError):
            restored_propensity(np.array([0.5, 0.5]), p_w, mech)


class TestStratifiedEffect:
    def test_singleton_strata_equal_full_adjustment(self):
        rng = np.random.default_rng(14)
        table = random_table(rng, (3, 2, 6))
        profile = PropensityProfile(
            scores=table.cells[1].sum(axis=0) / table.cells.sum(axis=(0, 1)),
            strata=tuple((z,) for z in range(6)),
            weights=table.cells.sum(axis=(0, 1)),
        )
        for x in range(3):
            np.testing.assert_allclose(
                stratified_effect(table, profile, x),
                adjust_for_confounder(table, x),
                atol=1e-12,
            )

    def test_single_stratum_is_no_adjustment(self):
        rng = np.random.default_rng(15)
        table = random_table(rng, (2, 2, 5))
        profile = PropensityProfile(
            scores=np.zeros(5), strata=(tuple(range(5)),), weights=np.array([1.0])
        )
        p_y_given_x1 = table.cells[1].sum(axis=1) / table.cells[1].sum()
        np.testing.assert_allclose(
            stratified_effect(table, profile, 1), p_y_given_x1, atol=1e-14
        )

    def test_exact_value_binning_is_lossless_for_binary_treatment(self):
        # L takes two distinct values; grouping by value loses nothing
        rng = np.random.default_rng(16)
        n_z = 10
        p_z = rng.dirichlet(np.ones(n_z))
        score = np.where(np.arange(n_z) % 2 == 0, 0.3, 0.7)
        p_y = rng.dirichlet(np.ones(3), size=(2, n_z))  # (x, z) -> dist over y
        cells = np.empty((2, 3, n_z))
        for z in range(n_z):
            for x in (0, 1):
                px = score[z] if x == 1 else 1.0 - score[z]
                cells[x, :, z] = p_z[z] * px * p_y[x, z]
        table = JointTable(cells, "Z")
        profile = propensity_profile(table, n_bins=10)
        assert len(profile.strata) == 2
        for x in (0, 1):
            np.testing.assert_allclose(
                stratified_effect(table, profile, x),
                adjust_for_confounder(table, x),
                atol=1e-12,
            )

    def test_equal_width_binning_when_many_distinct_scores(self):
        rng = np.random.default_rng(17)
        table = random_table(rng, (2, 2, 40))
        profile = propensity_profile(table, n_bins=5)
        assert len(profile.strata) <= 5
        assert profile.weights.sum() == pytest.approx(1.0, abs=1e-12)
        out = stratified_effect(table, profile, 1)
        assert out.sum() == pytest.approx(1.0, abs=1e-12)

    def test_empty_stratum_with_weight_raises(self):
        rng = np.random.default_rng(18)
        table = random_table(rng, (2, 2, 2))
        profile = PropensityProfile(
            scores=np.array([0.5, 0.5]),
            strata=((0, 1), ()),
            weights=np.array([0.6, 0.4]),
        )
        with pytest.raises(DegenerateStratumError):
            stratified_effect(table, profile, 1)

    def test_uncovered_mass_raises(self):
        rng = np.random.default_rng(19)
        table = random_table(rng, (2, 2, 3))
        profile = PropensityProfile(
            scores=np.full(3, 0.5), strata=((0, 1),), weights=np.array([1.0])
        )
        with pytest.raises(ValidationError):
            stratified_effect(table, profile, 0)

    def test_positivity_inside_stratum(self):
        cells = np.zeros((2, 2, 2))
        cells[0, 0, 0] = 0.25
        cells[0, 1, 0] = 0.25
        cells[0, 0, 1] = 0.1
        cells[1, 1, 1] = 0.4
        table = JointTable(cells, "Z")
        profile = PropensityProfile(
            scores=np.array([0.0, 0.8]),
            strata=((0,), (1,)),
            weights=np.array([0.5, 0.5]),
        )
        with pytest.raises(PositivityError):
            stratified_effect(table, profile, 1)

    def test_profile_weight_validation(self):
        with pytest.raises(ValidationError):
            PropensityProfile(
                scores=np.array([0.5]), strata=((0,),), weights=np.array([0.7])
            )
        with pytest.raises(ValidationError):
            PropensityProfile(
                scores=np.array([0.5, 0.5]),
                strata=((0, 1), (1,)),
                weights=np.array([0.5, 0.5]),
            )
