import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_force

from dferc.ddm import (DdmConfig, DdmHeads, batch_masks, contrastive_from_logits, contrastive_losses,
                       ddm_loss, grouping_modality, grouping_utterance, index_map, project_dual,
                       supervised_contrastive_loss)
from dferc.numcore import Tensor, grad_check

DIMS = (8, 6, 5)


def heads(seed=0, proj=4, zero=False):
    h = DdmHeads.init(np.random.default_rng(seed), DIMS, DdmConfig(proj_dim=proj))
    if zero:
        for _, p in h.named_parameters():
            p.data[...] = 0.0
    return h


def raw(n, seed=0):
    rng = np.random.default_rng(seed)
    return [Tensor(rng.standard_normal((n, d))) for d in DIMS]


# --- layout and grouping -----------------------------------------------------

def test_index_map_position_four():
    assert index_map(3)[4] == (1, "audio")


def test_single_utterance_lists_have_three_entries():
    df = project_dual(raw(1), heads())
    assert len(index_map(1)) == 3
    assert all(m.shape[0] == 1 for m in df.modality)


def test_zero_heads_give_zero_projections():
    df = project_dual(raw(2), heads(zero=True))
    for t in df.modality + df.utterance:
        np.testing.assert_array_equal(t.data, 0.0)


def test_residual_width():
    df = project_dual(raw(2), heads(proj=4))
    assert [x.shape[1] for x in df.fused_input] == [d + 8 for d in DIMS]


def test_grouping_examples():
    assert grouping_modality(2)[0] == {3}
    assert grouping_modality(3)[4] == {1, 7}
    assert grouping_utterance(5)[0] == {1, 2}
    assert grouping_utterance(2)[5] == {3, 4}


@pytest.mark.parametrize("n", [1, 2, 3, 7])
def test_grouping_sizes(n):
    assert all(len(s) == n - 1 for s in grouping_modality(n))
    assert all(len(s) == 2 for s in grouping_utterance(n))


def test_batch_masks_match_sets():
    pos_m, scope = batch_masks([3], "modality")
    pos_u, _ = batch_masks([3], "utterance")
    for i in range(9):
        assert set(np.flatnonzero(pos_m[i])) == grouping_modality(3)[i]
        assert set(np.flatnonzero(pos_u[i])) == grouping_utterance(3)[i]
    assert not scope.diagonal().any()


def test_batch_masks_block_diagonal():
    pos, scope = batch_masks([2, 1], "modality")
    assert not scope[:6, 6:].any() and not scope[6:, :6].any()
    assert not pos[6:].any()


# --- contrastive loss values --------------------------------------------------

def test_identical_vectors_modality():
    h = Tensor(np.ones((6, 3)))
    v = supervised_contrastive_loss(h, grouping_modality(2), 0.5).item()
    assert v == pytest.approx(6 * math.log(5), abs=1e-9)
    assert v == pytest.approx(9.65663, abs=1e-5)


def test_identical_vectors_utterance():
    h = Tensor(np.ones((6, 3)))
    v = supervised_contrastive_loss(h, grouping_utterance(2), 0.3).item()
    assert v == pytest.approx(12 * math.log(5), abs=1e-9)


def test_orthogonal_groups_match_brute_force():
    # utterance 0 along e1, utterance 1 along e2
    vecs = [[1.0, 0.0]] * 3 + [[0.0, 2.0]] * 3
    sets = grouping_utterance(2)
    got = supervised_contrastive_loss(Tensor(np.array(vecs)), sets, 0.5).item()
    assert got == pytest.approx(brute_force(vecs, sets, 0.5), abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("group", [grouping_modality, grouping_utterance])
def test_random_dialogue_matches_brute_force(seed, group):
    rng = np.random.default_rng(seed)
    vecs = rng.standard_normal((9, 4))
    sets = group(3)
    got = supervised_contrastive_loss(Tensor(vecs), sets, 0.4).item()
    assert got == pytest.approx(brute_force(vecs.tolist(), sets, 0.4), abs=1e-10)


def test_first_n_anchor_flag():
    rng = np.random.default_rng(3)
    vecs = rng.standard_normal((9, 4))
    anchors = np.arange(9) < 3
    got = supervised_contrastive_loss(Tensor(vecs), grouping_utterance(3), 0.3, anchors=anchors).item()
    assert got == pytest.approx(brute_force(vecs.tolist(), grouping_utterance(3), 0.3, range(3)), abs=1e-10)


@pytest.mark.parametrize("n", [2, 3])
def test_zero_vectors_symmetry_formula(n):
    df = project_dual(raw(n), heads(zero=True))
    lm, lu = contrastive_losses(df, DdmConfig(proj_dim=4))
    assert lm.item() == pytest.approx(3 * n * (n - 1) * math.log(3 * n - 1), abs=1e-9)
    assert lu.item() == pytest.approx(3 * n * 2 * math.log(3 * n - 1), abs=1e-9)


def test_single_utterance_modality_component_zero():
    counter = Counter()
    df = project_dual(raw(1), heads())
    lm, lu = contrastive_losses(df, DdmConfig(proj_dim=4), counter=counter)
    assert lm.item() == 0.0
    assert np.isfinite(lu.item()) and lu.item() > 0
    assert counter["empty_anchor"] == 3


def test_ddm_loss_is_sum_of_components():
    df = project_dual(raw(3), heads())
    cfg = DdmConfig(proj_dim=4)
    lm, lu = contrastive_losses(df, cfg)
    assert ddm_loss(df, cfg).item() == lm.item() + lu.item()


def test_batch_equals_sum_of_dialogues():
    h = heads()
    cfg = DdmConfig(proj_dim=4)
    a, b = raw(2, seed=1), raw(3, seed=2)
    joint = [Tensor(np.concatenate([x.data, y.data])) for x, y in zip(a, b)]
    total = ddm_loss(project_dual(joint, h), cfg, lengths=[2, 3]).item()
    parts = ddm_loss(project_dual(a, h), cfg).item() + ddm_loss(project_dual(b, h), cfg).item()
    assert total == pytest.approx(parts, abs=1e-12)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        supervised_contrastive_loss(Tensor(np.ones((1, 2))), [set()], 0.5)
    with pytest.raises(ValueError):
        supervised_contrastive_loss(Tensor(np.ones((3, 2))), [{0}, set(), set()], 0.5)
    with pytest.raises(ValueError):
        DdmConfig(tau_m=0.0)


# --- properties ----------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 4), seed=st.integers(0, 2**31 - 1), tau=st.floats(0.05, 2.0))
def test_loss_nonnegative(n, seed, tau):
    vecs = Tensor(np.random.default_rng(seed).standard_normal((3 * n, 3)))
    for group in (grouping_modality, grouping_utterance):
        assert supervised_contrastive_loss(vecs, group(n), tau, counter=Counter()).item() >= 0.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 5))
def test_permutation_equivariance(seed, n):
    rng = np.random.default_rng(seed)
    x = raw(n, seed)
    perm = rng.permutation(n)
    h, cfg = heads(seed % 7), DdmConfig(proj_dim=4)
    base = ddm_loss(project_dual(x, h), cfg).item()
    permuted = ddm_loss(project_dual([Tensor(t.data[perm]) for t in x], h), cfg).item()
    assert permuted == pytest.approx(base, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), bump=st.floats(0.01, 1.0))
def test_monotone_in_positive_similarity(seed, bump):
    rng = np.random.default_rng(seed)
    S = rng.uniform(-1, 1, (6, 6))
    S = (S + S.T) / 2
    pos, scope = batch_masks([2], "utterance")
    a, k = np.argwhere(pos)[rng.integers(pos.sum())]
    before = contrastive_from_logits(Tensor(S), pos, scope).item()
    S[a, k] += bump
    S[k, a] += bump
    after = contrastive_from_logits(Tensor(S), pos, scope).item()
    assert after < before


@pytest.mark.parametrize("level", ["modality", "utterance"])
def test_gradients(level):
    h = heads(5)
    cfg = DdmConfig(proj_dim=4)
    x = raw(2, seed=9)
    params = [p for _, p in h.named_parameters()]

    def f():
        lm, lu = contrastive_losses(project_dual(x, h), cfg)
        return lm if level == "modality" else lu

    assert grad_check(f, params).max_rel_err < 1e-4
