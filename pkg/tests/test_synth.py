import numpy as np
import pytest

from drmc import loss
from drmc.errors import ConfigError
from drmc.matrix import Mask, assemble_joint
from drmc.synth import (REFERENCE_SPEC, SyntheticSpec, dense_shrink_oracle, fd_gradient_oracle,
                        generate)

from conftest import random_instance


def test_ground_truth_rank(reference):
    _, _, truth = reference
    S = np.linalg.svd(truth, compute_uv=False)
    tol = max(truth.shape) * S[0] * np.finfo(float).eps
    assert int((S > tol).sum()) == REFERENCE_SPEC.rank


def test_zero_noise_bits_equal_truth():
    spec = SyntheticSpec(n=20, m=10, d=8, t=4, rank=2, seed=1)
    inst, gold, truth = generate(spec)
    B = truth > 0
    np.testing.assert_array_equal(inst.features.toarray() != 0, B[:, :spec.d])
    np.testing.assert_array_equal(inst.train_labels.toarray() != 0, B[:spec.n, spec.d:])
    np.testing.assert_array_equal(gold.dense(), B[spec.n:, spec.d:])


def test_gold_is_noiseless(reference):
    _, gold, truth = reference
    s = REFERENCE_SPEC
    np.testing.assert_array_equal(gold.dense(), truth[s.n:, s.d:] > 0)


def test_same_seed_same_instance():
    a, ga, ta = generate(REFERENCE_SPEC)
    b, gb, tb = generate(REFERENCE_SPEC)
    assert ta.tobytes() == tb.tobytes()
    assert (a.features != b.features).nnz == 0 and (a.train_labels != b.train_labels).nnz == 0
    assert (ga.labels != gb.labels).nnz == 0


def test_noise_rates_roughly_respected(reference):
    inst, _, truth = reference
    s = REFERENCE_SPEC
    flips = (inst.features.toarray() != 0) != (truth[:, :s.d] > 0)
    assert abs(flips.mean() - s.feature_noise) < 0.02


@pytest.mark.parametrize("kwargs", [dict(rank=0), dict(rank=500), dict(feature_noise=0.5),
                                    dict(label_flip=-0.1), dict(n=0)])
def test_spec_validation(kwargs):
    base = dict(n=10, m=5, d=6, t=3, rank=2)
    base.update(kwargs)
    with pytest.raises(ConfigError):
        generate(SyntheticSpec(**base))


def test_fd_oracle_zero_at_unmasked_cells():
    inst = random_instance(0)
    inst = inst.with_masks(Mask([0], [0], [1.0]), Mask.empty())
    Z = np.random.default_rng(0).standard_normal((inst.n_items, inst.d + inst.t))
    gz, _ = fd_gradient_oracle(Z, np.zeros(inst.t), inst, 1.0, cells=[(1, 1), (0, inst.d)])
    assert np.all(gz == 0)


def test_fd_oracle_richardson_stability():
    inst = random_instance(1)
    Z = np.random.default_rng(1).standard_normal((inst.n_items, inst.d + inst.t))
    cells = [(int(r), int(c)) for r, c in zip(inst.mask_x.rows[:20], inst.mask_x.cols[:20])]
    a, _ = fd_gradient_oracle(Z, np.zeros(inst.t), inst, 1.0, 1e-5, cells)
    b, _ = fd_gradient_oracle(Z, np.zeros(inst.t), inst, 1.0, 5e-6, cells)
    np.testing.assert_allclose(a, b, rtol=1e-6)


def test_fd_oracle_step_range():
    inst = random_instance(0)
    Z = np.zeros((inst.n_items, inst.d + inst.t))
    with pytest.raises(ConfigError):
        fd_gradient_oracle(Z, np.zeros(inst.t), inst, 1.0, h=1e-3)


def test_fd_oracle_agrees_with_analytic_on_100_cells():
    inst, _, _ = generate(SyntheticSpec(n=20, m=10, d=15, t=5, rank=2, seed=4))
    rng = np.random.default_rng(4)
    Z = rng.standard_normal((inst.n_items, inst.d + inst.t))
    b = rng.standard_normal(inst.t)
    cells = list(zip(rng.integers(0, inst.n, 100).tolist(), rng.integers(0, 20, 100).tolist()))
    g = loss.gradient_drmc_b(Z, b, inst, 1.0)
    gz, _ = fd_gradient_oracle(Z, b, inst, 1.0, cells=cells)
    np.testing.assert_allclose([g.gZ[c] for c in cells], gz, rtol=1e-5)


def test_dense_shrink_oracle_cases():
    np.testing.assert_allclose(dense_shrink_oracle(np.diag([3.0, 1.0, 0.2]), 0.5),
                               np.diag([2.5, 0.5, 0.0]), atol=1e-15)
    A = np.random.default_rng(2).standard_normal((6, 5))
    np.testing.assert_allclose(dense_shrink_oracle(A, 0.0), A, atol=1e-8)


def test_generated_instance_valid(reference):
    inst, _, _ = reference
    Z = assemble_joint(inst)
    assert Z.shape == (120, 70)
    assert len(inst.mask_y) == 80 * 10
