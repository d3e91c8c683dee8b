import numpy as np
import pytest

from czsynth import gradsim, neural, qmat, templates
from czsynth.neural import AdamState, ClassifierNet, EncoderModel


def random_unitary(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def family2():
    return templates.enumerate_templates(2, 3)


class TestClassifierForward:
    def test_zeroed_final_layer_gives_uniform(self, rng):
        net = ClassifierNet.create(2, 4, (16,), "x", rng)
        net.weights[-1][:] = 0.0
        net.biases[-1][:] = 0.0
        probs = neural.classifier_forward(net, rng.normal(size=32))
        assert np.allclose(probs, 0.25, atol=1e-12)
        # cross-entropy of the uniform output is ln 4 for any label
        assert neural.cross_entropy(probs[None], np.array([2])) == pytest.approx(
            np.log(4), abs=1e-9)

    def test_distribution_property(self, rng):
        net = ClassifierNet.create(2, 4, (32, 32), "x", rng)
        for _ in range(20):
            p = neural.classifier_forward(net, rng.normal(size=32))
            assert abs(p.sum() - 1.0) < 1e-6
            assert np.all(p >= 0)

    def test_size_mismatch(self, rng):
        net = ClassifierNet.create(2, 4, (16,), "x", rng)
        with pytest.raises(ValueError):
            neural.classifier_forward(net, np.zeros(31))


class TestClassifierTraining:
    def test_overfits_one_batch(self, rng, family2):
        net = ClassifierNet.create(2, 4, (64,), "x", rng)
        adam = AdamState(net.params(), lr=1e-3)
        from czsynth.tasks import gen_classifier_batch
        x, y = gen_classifier_batch(family2, 32, rng)
        loss = None
        for _ in range(2000):
            loss = neural.classifier_train_step(net, x, y, adam)
            if loss < 0.01:
                break
        assert loss < 0.01

    def test_loss_finite_nonnegative(self, rng, family2):
        net = ClassifierNet.create(2, 4, (16,), "x", rng)
        adam = AdamState(net.params())
        from czsynth.tasks import gen_classifier_batch
        for _ in range(5):
            x, y = gen_classifier_batch(family2, 16, rng)
            loss = neural.classifier_train_step(net, x, y, adam)
            assert np.isfinite(loss) and loss >= 0

    def test_label_out_of_range(self, rng):
        net = ClassifierNet.create(2, 4, (16,), "x", rng)
        adam = AdamState(net.params())
        with pytest.raises(ValueError):
            neural.classifier_train_step(net, np.zeros((1, 32)), np.array([4]), adam)

    def test_backprop_matches_finite_differences(self, rng):
        net = ClassifierNet(2, "x", [8, 5, 3],
                            [rng.normal(size=(5, 8)) * 0.5, rng.normal(size=(3, 5)) * 0.5],
                            [rng.normal(size=5) * 0.1, rng.normal(size=3) * 0.1])
        x = rng.normal(size=(4, 8))
        y = np.array([0, 2, 1, 1])

        probs, acts = net.forward_batch(x, keep_cache=True)
        dz = probs.copy()
        dz[np.arange(4), y] -= 1
        dz /= 4
        grads = [None] * 4
        for i in (1, 0):
            grads[i] = dz.T @ acts[i]
            grads[2 + i] = dz.sum(axis=0)
            if i > 0:
                dz = (dz @ net.weights[i]) * (acts[i] > 0)

        def loss():
            return neural.cross_entropy(net.forward_batch(x), y)

        h = 1e-6
        for p, g in zip(net.params(), grads):
            pv, gv = p.reshape(-1), g.reshape(-1)
            for k in range(pv.size):
                old = pv[k]
                pv[k] = old + h
                lp = loss()
                pv[k] = old - h
                lm = loss()
                pv[k] = old
                fd = (lp - lm) / (2 * h)
                assert abs(gv[k] - fd) / max(abs(fd), 1e-8) < 1e-4


class TestEncoderForward:
    def test_all_slots_unitary(self, rng, family2):
        for t in family2:
            enc = EncoderModel.create(t, (16,), "x", rng)
            mats = neural.encoder_forward(enc, random_unitary(4, rng))
            for m in mats:
                assert qmat.is_unitary(m, 1e-10)

    def test_head_identity(self, rng, family2):
        # FULL-slot head with (a, b) = (1, 0) emits the identity
        t = family2[0]
        enc = EncoderModel.create(t, (4,), "x", rng)
        for w in enc.weights:
            w[:] = 0
        for b in enc.biases:
            b[:] = 0
        enc.biases[-1][0::2] = 1.0  # a = 1, b = 0 for every slot
        mats = neural.encoder_forward(enc, np.eye(4))
        for m in mats:
            assert np.allclose(m, np.eye(2))

    def test_head_y_rotation(self, rng, family2):
        t = family2[0]
        enc = EncoderModel.create(t, (4,), "x", rng)
        for w in enc.weights:
            w[:] = 0
        for b in enc.biases:
            b[:] = 0
        enc.biases[-1][1::2] = 1.0  # a = 0, b = 1
        mats = neural.encoder_forward(enc, np.eye(4))
        assert np.allclose(mats[0], np.array([[0, -1], [1, 0]]))

    def test_degenerate_head_flagged(self, rng, family2):
        t = family2[0]
        enc = EncoderModel.create(t, (4,), "x", rng)
        for w in enc.weights:
            w[:] = 0
        for b in enc.biases:
            b[:] = 0
        mats, flags = neural.encoder_forward(enc, np.eye(4), return_flags=True)
        assert flags.all()
        for m in mats:
            assert np.allclose(m, np.eye(2))

    def test_partial_slots_exactly_representable(self, rng, family2):
        t = family2[3]  # 3-CZ template with PARTIAL interior slots
        enc = EncoderModel.create(t, (16,), "x", rng)
        mats, _ = enc.forward_batch(random_unitary(4, rng)[None])
        for slot, m in zip(t.slots, mats[0]):
            if slot.kind == templates.PARTIAL:
                a, b = templates.project_to_partial(m)
                fit = templates.slot_matrix(templates.PARTIAL, np.array([a, b]))
                assert qmat.fidelity(fit, m) == pytest.approx(1.0, abs=1e-10)

    def test_dim_mismatch(self, rng, family2):
        enc = EncoderModel.create(family2[0], (8,), "x", rng)
        with pytest.raises(ValueError):
            neural.encoder_forward(enc, np.eye(8))


class TestEncoderTraining:
    def test_overfit_single_unitary(self, rng):
        t = templates.enumerate_templates(2, 0)[0]
        enc = EncoderModel.create(t, (32, 32), "x", rng)
        adam = AdamState(enc.params(), lr=2e-3)
        u = gradsim.assemble_batch(t, templates.sample_params(t, rng)[None])
        fid = 0.0
        for _ in range(5000):
            fid = neural.encoder_train_step(enc, u, t, adam)
            if fid >= 0.99:
                break
        assert fid >= 0.99

    def test_mean_fidelity_in_range(self, rng, family2):
        t = family2[1]
        enc = EncoderModel.create(t, (16,), "x", rng)
        adam = AdamState(enc.params())
        from czsynth.tasks import gen_encoder_batch
        batch = gen_encoder_batch(t, 8, rng)
        fid = neural.encoder_train_step(enc, batch, t, adam)
        assert 0.0 <= fid <= 1.0

    def test_backprop_matches_finite_differences(self, rng, family2):
        # covers both head kinds: template 3 has FULL and PARTIAL slots
        t = family2[3]
        enc = EncoderModel.create(t, (6,), "x", rng)
        u = gradsim.assemble_batch(
            t, np.stack([templates.sample_params(t, rng) for _ in range(2)]))

        def loss():
            mats, _ = enc.forward_batch(u)
            fids, _, _ = gradsim.fidelity_grad_slots_batch(t, mats, u)
            return 1.0 - float(np.mean(fids))

        mats, _, cache = enc.forward_batch(u, keep_cache=True)
        fids, g_mats, _ = gradsim.fidelity_grad_slots_batch(t, mats, u)
        grads = neural.encoder_backward(enc, cache, -g_mats / u.shape[0])

        h = 1e-6
        for p, g in zip(enc.params(), grads):
            pv = p.view(np.float64).reshape(-1)
            gv = np.ascontiguousarray(g).view(np.float64).reshape(-1)
            for k in rng.choice(pv.size, size=min(25, pv.size), replace=False):
                old = pv[k]
                pv[k] = old + h
                lp = loss()
                pv[k] = old - h
                lm = loss()
                pv[k] = old
                fd = (lp - lm) / (2 * h)
                assert abs(gv[k] - fd) / max(abs(fd), 1e-8) < 1e-4

    def test_training_deterministic(self, family2):
        from czsynth.tasks import TrainConfig, train_suggester

        cfg = TrainConfig(steps=30, batch_size=8, seed=11, hidden=(16,), log_interval=10)
        _, c1 = train_suggester(family2[0], cfg, "x")
        _, c2 = train_suggester(family2[0], cfg, "x")
        assert c1 == c2


class TestModelIO:
    def test_round_trip_classifier(self, rng, tmp_path):
        net = ClassifierNet.create(2, 4, (16, 8), "fam", rng)
        net.metadata = {"seed": 1, "steps": 10, "final_metric": 0.5}
        path = tmp_path / "c.json"
        neural.save_model(net, str(path))
        back = neural.load_model(str(path), expect_kind="classifier")
        x = rng.normal(size=32)
        assert np.array_equal(neural.classifier_forward(net, x),
                              neural.classifier_forward(back, x))

    def test_round_trip_encoder(self, rng, family2, tmp_path):
        enc = EncoderModel.create(family2[3], (12,), "fam", rng)
        path = tmp_path / "e.json"
        neural.save_model(enc, str(path))
        back = neural.load_model(str(path), expect_kind="encoder")
        u = random_unitary(4, rng)
        m1, _ = enc.forward_batch(u[None])
        m2, _ = back.forward_batch(u[None])
        assert np.array_equal(m1, m2)
        assert back.slot_kinds == enc.slot_kinds

    def test_kind_mismatch_is_typed_error(self, rng, tmp_path):
        net = ClassifierNet.create(2, 4, (8,), "fam", rng)
        path = tmp_path / "c.json"
        neural.save_model(net, str(path))
        with pytest.raises(neural.ModelKindError):
            neural.load_model(str(path), expect_kind="encoder")

    def test_family_hash_mismatch(self, rng, tmp_path):
        net = ClassifierNet.create(2, 4, (8,), "fam", rng)
        path = tmp_path / "c.json"
        neural.save_model(net, str(path))
        with pytest.raises(neural.FamilyHashError):
            neural.load_model(str(path), expect_family_hash="other")

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(neural.ModelFileError):
            neural.load_model(str(path))

    def test_version_check(self, rng, tmp_path):
        import json

        net = ClassifierNet.create(2, 4, (8,), "fam", rng)
        path = tmp_path / "c.json"
        neural.save_model(net, str(path))
        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(neural.ModelFileError):
            neural.load_model(str(path))

    def test_save_bytes_deterministic(self, rng, family2, tmp_path):
        enc = EncoderModel.create(family2[1], (8,), "fam", rng)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        neural.save_model(enc, str(p1))
        neural.save_model(enc, str(p2))
        assert p1.read_bytes() == p2.read_bytes()
