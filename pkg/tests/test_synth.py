import numpy as np
import pytest

from czsynth import qmat, synth, templates
from czsynth.neural import ClassifierNet
from czsynth.synth import OracleConfig, RefineConfig
from czsynth.templates import sample_params


def random_unitary(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def family2():
    return templates.enumerate_templates(2, 3)


def fixed_ranking_net(logits, n_qubits=2):
    """Classifier stub with zero weights: always emits softmax(logits)."""
    k = len(logits)
    net = ClassifierNet(n_qubits, "stub", [2 * 4**n_qubits, k],
                        [np.zeros((k, 2 * 4**n_qubits))],
                        [np.asarray(logits, dtype=float)])
    return net


class TestRefine:
    def test_stops_immediately_at_optimum(self, family2):
        rng = np.random.default_rng(0)
        t = family2[2]
        p = sample_params(t, rng)
        target = templates.assemble(t, p)
        out_p, fid, trace = synth.refine(t, p, target, RefineConfig())
        assert fid == pytest.approx(1.0, abs=1e-12)
        assert trace == [(0, trace[0][1])]
        assert np.array_equal(out_p, p)

    def test_never_below_start(self, family2):
        rng = np.random.default_rng(1)
        t = family2[1]
        for _ in range(5):
            p0 = sample_params(t, rng)
            target = random_unitary(4, rng)
            start = qmat.fidelity(target, templates.assemble(t, p0))
            _, fid, _ = synth.refine(t, p0, target, RefineConfig(max_iters=100))
            assert fid >= start - 1e-12

    def test_trace_errors_recomputable(self, family2):
        rng = np.random.default_rng(2)
        t = family2[1]
        p0 = sample_params(t, rng)
        target = templates.assemble(t, sample_params(t, rng))
        out_p, fid, trace = synth.refine(t, p0, target,
                                         RefineConfig(max_iters=300, log_interval=50))
        # first row is the error at the start, last row at the returned params
        assert trace[0] == (0, pytest.approx(
            1 - qmat.fidelity(target, templates.assemble(t, p0)), abs=1e-12))
        assert trace[-1][1] == pytest.approx(
            1 - qmat.fidelity(target, templates.assemble(t, out_p)), abs=1e-12)
        # best-iterate errors are nonincreasing
        errs = [e for _, e in trace]
        assert all(a >= b - 1e-15 for a, b in zip(errs, errs[1:]))

    def test_converges_on_representable_target(self, family2):
        rng = np.random.default_rng(3)
        t = family2[1]
        target = templates.assemble(t, sample_params(t, rng))
        p0 = sample_params(t, rng)
        _, fid, trace = synth.refine(t, p0, target,
                                     RefineConfig(max_iters=3000, target_error=1e-8))
        # single-start refinement may stall in a local minimum, but the best
        # error must at least drop well below the starting error
        assert trace[-1][1] < trace[0][1]

    def test_dimension_validation(self, family2):
        with pytest.raises(ValueError):
            synth.refine(family2[0], np.zeros(6), np.eye(8), RefineConfig())
        with pytest.raises(ValueError):
            synth.refine(family2[0], np.zeros(5), np.eye(4), RefineConfig())


class TestRankTemplates:
    def test_fixed_logits_rank(self, family2):
        net = fixed_ranking_net([0.1, 3.0, 2.0, 1.0])
        ids = synth.rank_templates(net, np.eye(4), family2)
        assert ids == [1, 2, 3, 0]

    def test_max_cz_filter(self, family2):
        net = fixed_ranking_net([0.0, 0.0, 0.0, 0.0])
        ids = synth.rank_templates(net, np.eye(4), family2, max_cz=0)
        assert ids == [0]

    def test_is_permutation(self, family2):
        rng = np.random.default_rng(4)
        net = ClassifierNet.create(2, 4, (16,), "h", rng)
        ids = synth.rank_templates(net, random_unitary(4, rng), family2)
        assert sorted(ids) == [0, 1, 2, 3]

    def test_ties_broken_by_id(self, family2):
        net = fixed_ranking_net([1.0, 1.0, 1.0, 1.0])
        assert synth.rank_templates(net, np.eye(4), family2) == [0, 1, 2, 3]


class TestSynthesize:
    def test_local_target_succeeds_on_zero_cz(self, family2):
        rng = np.random.default_rng(5)
        target = np.kron(random_unitary(2, rng), random_unitary(2, rng))
        net = fixed_ranking_net([4.0, 1.0, 0.5, 0.1])
        report = synth.synthesize(target, net, {}, family2,
                                  RefineConfig(max_iters=2000, target_error=1e-8,
                                               restarts=5, seed=0))
        assert report.success
        assert report.template_id == 0
        assert report.fidelity >= 1 - 1e-8
        assert family2[report.template_id].n_cz == 0

    def test_cz_target_needs_one_entangler(self, family2):
        net = fixed_ranking_net([4.0, 1.0, 0.5, 0.1])  # wrongly prefers 0-CZ
        report = synth.synthesize(qmat.CZ, net, {}, family2,
                                  RefineConfig(max_iters=1500, target_error=1e-8,
                                               restarts=8, seed=0))
        assert report.success
        assert family2[report.template_id].n_cz == 1
        # the failed 0-CZ visit tops out at the product-unitary bound 0.5
        first = report.visits[0]
        assert first.template_id == 0
        assert first.final_fidelity == pytest.approx(0.5, abs=1e-4)

    def test_visit_log_respects_ranking(self, family2):
        net = fixed_ranking_net([0.0, 1.0, 2.0, 3.0])
        report = synth.synthesize(qmat.standard_gate("SWAP"), net, {}, family2,
                                  RefineConfig(max_iters=800, target_error=1e-8,
                                               restarts=4, seed=1))
        visited = [v.template_id for v in report.visits]
        ranked = synth.rank_templates(net, qmat.standard_gate("SWAP"), family2)
        assert visited == ranked[: len(visited)]

    def test_exhaustion_reports_failure(self, family2):
        net = fixed_ranking_net([1.0, 0.0, 0.0, 0.0])
        report = synth.synthesize(qmat.CZ, net, {}, family2,
                                  RefineConfig(max_iters=300, target_error=1e-8,
                                               restarts=2, seed=0),
                                  max_cz=0)
        assert not report.success
        assert report.template_id is None
        assert len(report.visits) == 1
        assert report.visits[0].final_fidelity == pytest.approx(0.5, abs=1e-3)

    def test_dim_mismatch(self, family2):
        net = fixed_ranking_net([0.0] * 4)
        with pytest.raises(ValueError):
            synth.synthesize(np.eye(8), net, {}, family2, RefineConfig())


class TestOracle:
    def test_identity_and_local(self):
        rng = np.random.default_rng(6)
        assert synth.oracle_min_cz(np.eye(4), 2) == 0
        local = np.kron(random_unitary(2, rng), random_unitary(2, rng))
        assert synth.oracle_min_cz(local, 2) == 0

    def test_single_entangler_targets(self):
        assert synth.oracle_min_cz(qmat.standard_gate("CX"), 2) == 1
        assert synth.oracle_min_cz(qmat.CZ, 2) == 1

    def test_monotone_in_family_bound(self):
        # raising the family bound never increases the label
        u = qmat.standard_gate("CX")
        k3 = synth.oracle_min_cz(u, 2, OracleConfig(family_max_cz=3))
        k2 = synth.oracle_min_cz(u, 2, OracleConfig(family_max_cz=2))
        assert k3 <= k2

    def test_not_representable(self):
        with pytest.raises(synth.NotRepresentableError):
            synth.oracle_min_cz(qmat.standard_gate("SWAP"), 2,
                                OracleConfig(family_max_cz=1, max_iters=400))

    def test_evidence(self):
        k, evidence = synth.oracle_min_cz(qmat.CZ, 2, return_evidence=True)
        assert k == 1
        assert evidence[0]["n_cz"] == 0 and evidence[0]["best_fidelity"] < 0.9
        assert evidence[-1]["best_fidelity"] >= 1 - 1e-6

    def test_sampled_template_label_never_exceeds_source(self):
        rng = np.random.default_rng(7)
        fam = templates.enumerate_templates(2, 3)
        for t in fam:
            u = templates.assemble(t, sample_params(t, rng))
            assert synth.oracle_min_cz(u, 2) <= t.n_cz
