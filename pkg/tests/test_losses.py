import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import autodiff_input_grad, central_difference, grad_rel_err
from distillab.losses import (
    DistillConfig,
    cross_entropy,
    derivation_check,
    kd_grad_approx,
    kd_grad_closed_form,
    kd_loss,
    kl_distill,
    l2rkd_loss,
)
from distillab.tensor import (
    DomainError,
    GradientTape,
    ShapeError,
    Tensor,
    backward,
    log_softmax_rows,
    softmax_rows,
)

logit_rows = st.lists(
    st.lists(st.floats(min_value=-30, max_value=30), min_size=3, max_size=3),
    min_size=1,
    max_size=4,
)


def test_distill_config_validation():
    with pytest.raises(ValueError):
        DistillConfig(alpha=1.5)
    with pytest.raises(ValueError):
        DistillConfig(tau=0.0)
    with pytest.raises(ValueError):
        DistillConfig(r=0.0)
    with pytest.raises(ValueError):
        DistillConfig(eta=-0.1)
    with pytest.raises(ValueError):
        DistillConfig(method="fitnet")
    with pytest.raises(ValueError):
        DistillConfig(noise_sigma=-1.0)


class TestCrossEntropy:
    def test_uniform_prediction(self):
        loss = cross_entropy(Tensor([[0.0, 0.0]]), [0])
        assert abs(loss.item() - 0.6931471805599453) < 1e-12

    def test_confident_correct_prediction(self):
        assert cross_entropy(Tensor([[50.0, 0.0]]), [0]).item() < 1e-12

    def test_matches_per_row_closed_form(self, rng):
        logits = rng.normal(size=(3, 5)) * 4
        labels = rng.integers(0, 5, size=3)
        expected = 0.0
        for row, label in zip(logits, labels):
            expected += -(row[label] - np.log(np.sum(np.exp(row - row.max()))) - row.max())
        expected /= 3
        assert abs(cross_entropy(Tensor(logits), labels).item() - expected) < 1e-12

    def test_bad_label_rejected(self):
        with pytest.raises(IndexError):
            cross_entropy(Tensor([[0.0, 1.0]]), [2])

    def test_strictly_positive_for_soft_predictions(self, rng):
        logits = rng.normal(size=(4, 3))
        assert cross_entropy(Tensor(logits), rng.integers(0, 3, size=4)).item() > 0.0


def direct_kl(student, teacher, tau):
    """Direct-formula oracle: tau^2 * mean_i sum_k pT (log pT - log pS)."""
    pt = softmax_rows(teacher, tau)
    total = np.sum(pt * (log_softmax_rows(teacher, tau) - log_softmax_rows(student, tau)))
    return tau * tau * total / student.shape[0]


class TestKlDistill:
    def test_identical_logits_give_exact_zero(self):
        z = np.array([[1.0, -2.0, 0.5]])
        assert kl_distill(Tensor(z), z, tau=4.0).item() == 0.0

    def test_swapped_pair_closed_form(self):
        # log-ratio equals the logit difference, so KL = (e-1)/(e+1)
        loss = kl_distill(Tensor([[1.0, 0.0]]), np.array([[0.0, 1.0]]), tau=1.0)
        assert abs(loss.item() - 0.4621171572600098) < 1e-12

    def test_tau_squared_weighting_matches_direct_oracle(self, rng):
        student = rng.normal(size=(4, 6)) * 3
        teacher = rng.normal(size=(4, 6)) * 3
        got = kl_distill(Tensor(student), teacher, tau=4.0).item()
        want = direct_kl(student, teacher, 4.0)
        assert abs(got - want) < 1e-12
        assert abs(got - 16.0 * (want / 16.0)) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            kl_distill(Tensor(np.zeros((2, 3))), np.zeros((2, 4)), tau=1.0)

    def test_nonpositive_tau(self):
        with pytest.raises(DomainError):
            kl_distill(Tensor(np.zeros((1, 2))), np.zeros((1, 2)), tau=0.0)

    @settings(max_examples=150, deadline=None)
    @given(logit_rows, logit_rows, st.floats(min_value=0.5, max_value=50))
    def test_nonnegative_and_zero_iff_equal(self, a, b, tau):
        rows = min(len(a), len(b))
        student = np.array(a[:rows])
        teacher = np.array(b[:rows])
        value = kl_distill(Tensor(student), teacher, tau=tau).item()
        assert value >= 0.0
        probs_gap = np.abs(softmax_rows(student, tau) - softmax_rows(teacher, tau)).max()
        if value == 0.0:
            assert probs_gap < 1e-6
        if probs_gap > 1e-6:
            assert value > 0.0

    def test_teacher_side_is_detached(self):
        student = Tensor(np.array([[0.5, -0.5]]))
        teacher = Tensor(np.array([[2.0, 0.0]]))
        with GradientTape() as tape:
            tape.watch(student)
            tape.watch(teacher)
            loss = kl_distill(student, teacher, tau=2.0)
        grads = backward(loss)
        assert np.array_equal(grads[teacher].values, np.zeros((1, 2)))
        assert np.abs(grads[student].values).max() > 0.0


class TestCombinedLosses:
    def test_kd_alpha_one_equals_cross_entropy_exactly(self, rng):
        logits = rng.normal(size=(3, 4))
        teacher = rng.normal(size=(3, 4))
        labels = rng.integers(0, 4, size=3)
        cfg = DistillConfig(method="kd", alpha=1.0)
        assert kd_loss(Tensor(logits), teacher, labels, cfg).item() == cross_entropy(
            Tensor(logits), labels
        ).item()

    def test_kd_alpha_zero_equals_kl_exactly(self, rng):
        logits = rng.normal(size=(3, 4))
        teacher = rng.normal(size=(3, 4))
        labels = rng.integers(0, 4, size=3)
        cfg = DistillConfig(method="kd", alpha=0.0, tau=4.0)
        assert kd_loss(Tensor(logits), teacher, labels, cfg).item() == kl_distill(
            Tensor(logits), teacher, 4.0
        ).item()

    def test_kd_standard_weights_match_component_oracles(self, rng):
        logits = rng.normal(size=(5, 3)) * 2
        teacher = rng.normal(size=(5, 3)) * 2
        labels = rng.integers(0, 3, size=5)
        cfg = DistillConfig(method="kd", alpha=0.1, tau=4.0)
        got = kd_loss(Tensor(logits), teacher, labels, cfg).item()
        want = 0.1 * cross_entropy(Tensor(logits), labels).item() + 0.9 * direct_kl(
            logits, teacher, 4.0
        )
        assert abs(got - want) < 1e-12

    def test_kd_wrong_method_rejected(self):
        with pytest.raises(ValueError):
            kd_loss(Tensor(np.zeros((1, 2))), np.zeros((1, 2)), [0], DistillConfig(method="l2rkd"))

    def test_l2rkd_eta_zero_is_scaled_cross_entropy(self, rng):
        aug = rng.normal(size=(3, 4))
        region_s = rng.normal(size=(3, 4))
        region_t = rng.normal(size=(3, 4))
        labels = rng.integers(0, 4, size=3)
        cfg = DistillConfig(method="l2rkd", alpha=0.1, eta=0.0)
        got = l2rkd_loss(Tensor(aug), labels, Tensor(region_s), region_t, cfg).item()
        assert got == 0.1 * cross_entropy(Tensor(aug), labels).item()

    def test_l2rkd_identical_region_logits_reduce_to_ce_term(self, rng):
        aug = rng.normal(size=(3, 4))
        region = rng.normal(size=(3, 4))
        labels = rng.integers(0, 4, size=3)
        cfg = DistillConfig(method="l2rkd", alpha=0.1, eta=1.0, tau=4.0)
        got = l2rkd_loss(Tensor(aug), labels, Tensor(region), region, cfg).item()
        assert got == 0.1 * cross_entropy(Tensor(aug), labels).item()

    def test_l2rkd_standard_weights_match_component_oracles(self, rng):
        aug = rng.normal(size=(4, 3))
        region_s = rng.normal(size=(6, 3))
        region_t = rng.normal(size=(6, 3))
        labels = rng.integers(0, 3, size=4)
        cfg = DistillConfig(method="l2rkd", alpha=0.1, eta=1.0, tau=4.0)
        got = l2rkd_loss(Tensor(aug), labels, Tensor(region_s), region_t, cfg).item()
        want = 0.1 * cross_entropy(Tensor(aug), labels).item() + 1.0 * direct_kl(
            region_s, region_t, 4.0
        )
        assert abs(got - want) < 1e-12

    def test_affine_weight_reconstruction(self, rng):
        logits = rng.normal(size=(3, 4))
        teacher = rng.normal(size=(3, 4))
        labels = rng.integers(0, 4, size=3)

        def kd_at(alpha):
            return kd_loss(
                Tensor(logits), teacher, labels, DistillConfig(method="kd", alpha=alpha, tau=4.0)
            ).item()

        mixed = kd_at(0.3)
        assert abs(mixed - (0.3 * kd_at(1.0) + 0.7 * kd_at(0.0))) < 1e-12


class TestShiftInvariance:
    @settings(max_examples=100, deadline=None)
    @given(logit_rows, st.floats(min_value=-50, max_value=50))
    def test_constant_shift_leaves_losses_unchanged(self, rows, shift):
        logits = np.array(rows)
        labels = np.zeros(len(rows), dtype=int)
        teacher = logits[:, ::-1].copy()
        base_ce = cross_entropy(Tensor(logits), labels).item()
        base_kl = kl_distill(Tensor(logits), teacher, 4.0).item()
        base_sm = softmax_rows(logits, 4.0)
        shifted = logits + shift
        assert abs(cross_entropy(Tensor(shifted), labels).item() - base_ce) < 1e-10
        assert abs(kl_distill(Tensor(shifted), teacher + shift, 4.0).item() - base_kl) < 1e-10
        assert np.abs(softmax_rows(shifted, 4.0) - base_sm).max() < 1e-10


class TestDistillGradientForms:
    def test_identical_logits_give_zero_gradient(self):
        z = np.array([1.0, 2.0, 3.0])
        assert np.array_equal(kd_grad_closed_form(z, z, 4.0), np.zeros(3))
        assert np.array_equal(kd_grad_approx(z, z, 3), np.zeros(3))

    def test_swapped_pair_closed_form(self):
        got = kd_grad_closed_form(np.array([1.0, 0.0]), np.array([0.0, 1.0]), tau=1.0)
        assert np.abs(got - np.array([0.4621171572600097, -0.4621171572600097])).max() < 1e-12

    def test_matches_autodiff_gradient_of_distill_term(self, rng):
        # the closed form is the exact gradient of the batch-of-one KL term
        for tau in (1.0, 4.0, 17.0):
            student = rng.normal(size=4) * 3
            teacher = rng.normal(size=4) * 3
            g_auto = autodiff_input_grad(
                lambda t: kl_distill(t, teacher[None, :], tau), student[None, :]
            )
            closed = kd_grad_closed_form(student, teacher, tau)
            assert np.abs(g_auto[0] - closed).max() < 1e-10

    def test_scaled_difference_arithmetic(self):
        got = kd_grad_approx(np.array([1.0, -1.0]), np.array([0.5, -0.5]), 2)
        assert np.array_equal(got, np.array([0.25, -0.25]))

    def test_high_temperature_convergence_to_scaled_difference(self, rng):
        total = 200
        zs = rng.normal(size=(total, 10))
        zt = rng.normal(size=(total, 10))
        zs -= zs.mean(axis=1, keepdims=True)
        zt -= zt.mean(axis=1, keepdims=True)
        approx = kd_grad_approx(zs, zt, 10)
        errs = []
        for tau in (4.0, 20.0, 100.0, 500.0):
            exact = kd_grad_closed_form(zs, zt, tau)
            errs.append(
                np.median(np.linalg.norm(approx - exact, axis=1) / np.linalg.norm(exact, axis=1))
            )
        assert errs[2] < 0.05  # within 5% by tau=100
        assert all(b < a for a, b in zip(errs, errs[1:]))  # strictly decreasing


class TestDerivationCheck:
    def test_asymptotic_regime(self):
        report = derivation_check(seed=0, tau_list=[1e9], pairs=500)
        assert report.median_rel_err_scaled_diff[0] < 1e-6
        assert not report.zero_mean_violated

    def test_sweep_is_strictly_decreasing(self):
        report = derivation_check(seed=0, tau_list=[4, 20, 100, 500], class_count=10, pairs=1000)
        assert report.strictly_decreasing_scaled_diff
        assert report.strictly_decreasing_ratio_form
        assert report.median_rel_err_scaled_diff[2] < 0.05

    def test_shared_shift_flags_violated_assumption(self):
        report = derivation_check(seed=0, tau_list=[4, 20], pairs=200, mean_shift=5.0)
        assert report.zero_mean_violated
        # the exact gradient itself ignores a shared shift entirely
        z = np.random.default_rng(0).normal(size=6)
        w = np.random.default_rng(1).normal(size=6)
        plain = kd_grad_closed_form(z, w, 4.0)
        shifted = kd_grad_closed_form(z + 5.0, w + 5.0, 4.0)
        assert np.abs(plain - shifted).max() < 1e-12
        assert np.argmax(plain) == np.argmax(shifted)

    def test_non_ascending_taus_rejected(self):
        with pytest.raises(ValueError):
            derivation_check(seed=0, tau_list=[100, 4])

    def test_report_round_trip(self, tmp_path):
        report = derivation_check(seed=3, tau_list=[4, 20], pairs=100)
        report.save(tmp_path / "check.tsv", tmp_path / "check.json")
        text = (tmp_path / "check.tsv").read_text()
        header, *rows = text.strip().splitlines()
        assert header.split("\t") == [
            "tau",
            "median_rel_err_ratio_form",
            "median_rel_err_scaled_diff",
        ]
        assert len(rows) == 2
        parsed = [float(v) for v in rows[0].split("\t")]
        assert parsed[0] == 4.0
        d = report.to_dict()
        assert d["rows"][0]["median_rel_err_ratio_form"] == parsed[1]


class TestObjectiveGradients:
    def test_all_objectives_match_finite_differences(self, rng):
        cfg_kd = DistillConfig(method="kd", alpha=0.1, tau=4.0)
        cfg_lr = DistillConfig(method="l2rkd", alpha=0.1, eta=1.0, tau=4.0)
        for trial in range(25):
            gen = np.random.default_rng(trial)
            b, k = int(gen.integers(1, 5)), int(gen.integers(2, 6))
            logits = gen.normal(size=(b, k)) * 2
            teacher = gen.normal(size=(b, k)) * 2
            labels = gen.integers(0, k, size=b)

            cases = [
                lambda t: cross_entropy(t, labels),
                lambda t: kl_distill(t, teacher, 4.0),
                lambda t: kd_loss(t, teacher, labels, cfg_kd),
                lambda t: l2rkd_loss(t, labels, t, teacher, cfg_lr),
            ]
            for fn in cases:
                g = autodiff_input_grad(fn, logits)
                fd = central_difference(lambda v: fn(Tensor(v)).item(), logits)
                assert grad_rel_err(g, fd) < 1e-4
