import numpy as np
import pytest

from czsynth import neural, qmat, tasks, templates
from czsynth.neural import ClassifierNet


@pytest.fixture
def family2():
    return templates.enumerate_templates(2, 3)


def is_tensor_product(u):
    """True iff the 4x4 matrix factors as kron(a, b) with 2x2 blocks."""
    r = u.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    return np.linalg.matrix_rank(r, tol=1e-8) == 1


class _StubNet:
    """Minimal forward_batch-compatible predictor for structural tests."""

    def __init__(self, fn, k):
        self.fn = fn
        self.k = k

    def forward_batch(self, x):
        x = np.atleast_2d(x)
        return np.stack([self.fn(row) for row in x])


class TestClassifierBatch:
    def test_labels_roughly_uniform(self, family2):
        rng = np.random.default_rng(0)
        # large draw in chunks to keep assembly batched per template
        counts = np.zeros(4)
        total = 100_000
        for _ in range(10):
            _, y = tasks.gen_classifier_batch(family2, total // 10, rng)
            counts += np.bincount(y, minlength=4)
        freqs = counts / total
        assert np.all(np.abs(freqs - 0.25) < 0.02)

    def test_features_reconstruct_to_unitary(self, family2):
        rng = np.random.default_rng(1)
        x, _ = tasks.gen_classifier_batch(family2, 16, rng)
        for row in x:
            u = neural.unflatten_features(row)
            assert qmat.is_unitary(u, 1e-10)

    def test_deterministic(self, family2):
        x1, y1 = tasks.gen_classifier_batch(family2, 32, np.random.default_rng(7))
        x2, y2 = tasks.gen_classifier_batch(family2, 32, np.random.default_rng(7))
        assert np.array_equal(x1, x2) and np.array_equal(y1, y2)

    def test_labels_match_source_template(self, family2):
        # rebuild each feature row and confirm the labelled template can
        # represent it far better than chance
        rng = np.random.default_rng(2)
        x, y = tasks.gen_classifier_batch(family2, 8, rng)
        for row, lab in zip(x, y):
            u = neural.unflatten_features(row)
            if family2[lab].n_cz == 0:
                assert is_tensor_product(u)


class TestEncoderBatch:
    def test_all_unitary(self):
        rng = np.random.default_rng(3)
        t = templates.enumerate_templates(3, 3)[9]
        batch = tasks.gen_encoder_batch(t, 12, rng)
        for u in batch:
            assert qmat.is_unitary(u, 1e-10)

    def test_zero_cz_outputs_are_tensor_products(self, family2):
        rng = np.random.default_rng(4)
        batch = tasks.gen_encoder_batch(family2[0], 12, rng)
        for u in batch:
            assert is_tensor_product(u)

    def test_deterministic(self, family2):
        a = tasks.gen_encoder_batch(family2[2], 8, np.random.default_rng(5))
        b = tasks.gen_encoder_batch(family2[2], 8, np.random.default_rng(5))
        assert np.array_equal(a, b)


class TestTrainClassifier:
    def test_loss_curve_finite_and_deterministic(self, family2):
        cfg = tasks.TrainConfig(steps=40, batch_size=16, seed=3, hidden=(32,),
                                log_interval=10)
        net1, c1 = tasks.train_classifier(family2, cfg, "h")
        net2, c2 = tasks.train_classifier(family2, cfg, "h")
        assert all(np.isfinite(l) for _, l in c1)
        assert c1 == c2
        for w1, w2 in zip(net1.weights, net2.weights):
            assert np.array_equal(w1, w2)

    def test_metadata(self, family2):
        cfg = tasks.TrainConfig(steps=5, batch_size=8, seed=9, hidden=(8,))
        net, _ = tasks.train_classifier(family2, cfg, "h")
        assert net.metadata["seed"] == 9 and net.metadata["steps"] == 5


class TestEvalClassifier:
    def test_perfect_oracle_stub(self, family2):
        # stub that always puts the true template first needs label knowledge;
        # emulate with a net evaluated on its own argmax instead: use a
        # deterministic stub keyed on the 0-CZ tensor-product structure
        def predict(row):
            u = neural.unflatten_features(np.asarray(row))
            p = np.full(4, 1e-6)
            p[0 if is_tensor_product(u) else 1] = 1.0
            return p / p.sum()

        stub = _StubNet(predict, 4)
        fam0 = [templates.enumerate_templates(2, 0)[0]]
        report = tasks.eval_classifier(stub, fam0, 50, seed=11)
        assert report.accuracy == 1.0
        assert report.expected_visits == 1.0
        assert report.confusion[0, 0] == 50

    def test_uniform_random_predictor_visits(self, family2):
        rng_local = np.random.default_rng(123)

        def predict(row):
            p = rng_local.random(4)
            return p / p.sum()

        stub = _StubNet(predict, 4)
        report = tasks.eval_classifier(stub, family2, 2500, seed=12)
        # mean rank of the true label under a random ranking is (K+1)/2 = 2.5
        assert abs(report.expected_visits - 2.5) / 2.5 < 0.05

    def test_confusion_row_sums_and_accuracy(self, family2):
        rng = np.random.default_rng(6)
        net = ClassifierNet.create(2, 4, (16,), "h", rng)
        report = tasks.eval_classifier(net, family2, 30, seed=13)
        assert report.confusion.sum() == report.n_samples == 4 * 30
        assert np.all(report.confusion.sum(axis=1) == 30)
        assert report.accuracy == pytest.approx(
            np.trace(report.confusion) / report.n_samples)

    def test_top_k_monotone_and_complete(self, family2):
        rng = np.random.default_rng(7)
        net = ClassifierNet.create(2, 4, (16,), "h", rng)
        report = tasks.eval_classifier(net, family2, 20, seed=14)
        accs = [report.top_k_accuracy[k] for k in sorted(report.top_k_accuracy)]
        assert all(a <= b + 1e-12 for a, b in zip(accs, accs[1:]))
        assert accs[-1] == 1.0
        assert 1.0 <= report.expected_visits <= 4.0


class TestEvalSuggester:
    def test_start_fidelities_in_range_and_deterministic(self, family2):
        rng = np.random.default_rng(8)
        t = family2[1]
        enc = neural.EncoderModel.create(t, (16,), "h", rng)
        r1 = tasks.eval_suggester(enc, t, 10, seed=21)
        r2 = tasks.eval_suggester(enc, t, 10, seed=21)
        assert np.array_equal(r1.model_start_fids, r2.model_start_fids)
        assert np.all((r1.model_start_fids >= 0) & (r1.model_start_fids <= 1))
        assert np.all((r1.random_start_fids >= 0) & (r1.random_start_fids <= 1))

    def test_refine_never_below_start(self, family2):
        from czsynth.synth import RefineConfig

        rng = np.random.default_rng(9)
        t = family2[0]
        enc = neural.EncoderModel.create(t, (16,), "h", rng)
        cfg = RefineConfig(max_iters=50, log_interval=10)
        report = tasks.eval_suggester(enc, t, 5, seed=22, refine=True, refine_config=cfg)
        assert np.all(report.refined_fids >= report.model_start_fids - 1e-12)
        assert report.refined_iters is not None


class TestSweepRz:
    def test_structure(self):
        rng = np.random.default_rng(10)
        net = ClassifierNet.create(2, 4, (16,), "h", rng)
        rows = tasks.sweep_rz(net, resolution=21)
        assert len(rows) == 21
        thetas = [r[0] for r in rows]
        assert thetas[0] == pytest.approx(-np.pi) and thetas[-1] == pytest.approx(np.pi)
        for _, probs, arg in rows:
            assert abs(probs.sum() - 1) < 1e-6
            assert arg == int(np.argmax(probs))

    def test_sweep_circuit_is_zz_rotation(self):
        # the probe circuit at theta is diag(e^{-i t/2}, e^{+i t/2}, e^{+i t/2}, e^{-i t/2})
        cx = qmat.standard_gate("CX")
        theta = 0.77
        u = cx @ np.kron(np.eye(2), qmat.rz(theta)) @ cx
        h = np.exp(-0.5j * theta)
        assert np.allclose(u, np.diag([h, h.conj(), h.conj(), h]))

    def test_theta_zero_is_identity(self):
        cx = qmat.standard_gate("CX")
        u = cx @ np.kron(np.eye(2), qmat.rz(0.0)) @ cx
        assert np.allclose(u, np.eye(4))


class TestFeatureConsistency:
    def test_batch_features_match_single(self):
        # tasks._features (batch) and neural.flatten_unitary (single) must
        # agree entrywise, including the canonical-phase variant used by
        # ranking at inference time
        rng = np.random.default_rng(11)
        a = rng.normal(size=(3, 4, 4)) + 1j * rng.normal(size=(3, 4, 4))
        us = np.stack([np.linalg.qr(m)[0] for m in a])
        for canonical in (False, True):
            batch = tasks._features(us, canonical)
            for i, u in enumerate(us):
                single = neural.flatten_unitary(u, canonical_phase=canonical)
                assert np.array_equal(batch[i], single)
