import gzip
import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from dferc.dataio import (MODALITIES, Dataset, DatasetError, Dialogue, LabelSpace, Manifest, SynthConfig,
                          Utterance, batch_dialogues, generate_splits, generate_synthetic, load_dataset,
                          n_batches, synthetic_latents, write_dataset)


def small_cfg(**kw):
    base = dict(n_train=12, n_valid=4, n_test=4, mean_length=4)
    base.update(kw)
    return SynthConfig(**base)


def assert_same(a: Dataset, b: Dataset):
    assert a.manifest.dims == b.manifest.dims
    assert a.label_space == b.label_space
    assert [d.dialogue_id for d in a] == [d.dialogue_id for d in b]
    for da, db in zip(a, b):
        for ua, ub in zip(da.utterances, db.utterances):
            assert (ua.utt_id, ua.label, ua.speaker) == (ub.utt_id, ub.label, ub.speaker)
            for m in MODALITIES:
                np.testing.assert_array_equal(ua.features(m), ub.features(m))


# --- label space --------------------------------------------------------------------

def test_label_space_rules():
    assert LabelSpace.default(7).K == 7
    assert LabelSpace.default(6).index(LabelSpace.default(6).names[2]) == 2
    with pytest.raises(DatasetError):
        LabelSpace(("joy",))
    with pytest.raises(DatasetError):
        LabelSpace(("joy", "joy"))


# --- file format --------------------------------------------------------------------

@pytest.mark.parametrize("suffix", [".jsonl", ".jsonl.gz"])
def test_round_trip(tmp_path, suffix):
    ds = generate_synthetic(small_cfg(), "train")
    path = tmp_path / f"train{suffix}"
    write_dataset(ds, path)
    assert_same(ds, load_dataset(path))


def test_gzip_is_compressed(tmp_path):
    write_dataset(generate_synthetic(small_cfg(), "valid"), tmp_path / "v.jsonl.gz")
    with gzip.open(tmp_path / "v.jsonl.gz", "rt") as fh:
        assert json.loads(fh.readline())["split"] == "valid"


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(seed=st.integers(0, 2**31 - 1), K=st.integers(2, 8), n=st.integers(1, 5))
def test_round_trip_property(tmp_path, seed, K, n):
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in rng.integers(1, 6, 3))
    dialogues = []
    for i in range(n):
        utts = [Utterance(f"d{i}u{j}", int(rng.integers(K)), *(rng.standard_normal(d) * 1e3 for d in dims),
                          speaker=None if j % 2 else f"s{j}") for j in range(int(rng.integers(1, 4)))]
        dialogues.append(Dialogue(f"d{i}", utts))
    ds = Dataset(Manifest(LabelSpace.default(K), *dims), dialogues)
    write_dataset(ds, tmp_path / "p.jsonl")
    assert_same(ds, load_dataset(tmp_path / "p.jsonl"))


def rewrite(path, edit):
    lines = path.read_text().splitlines()
    obj = json.loads(lines[1])
    edit(obj)
    lines[1] = json.dumps(obj)
    path.write_text("\n".join(lines) + "\n")


def test_dim_mismatch_names_utterance(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(generate_synthetic(small_cfg(), "train"), path)
    rewrite(path, lambda o: o["utterances"][0].__setitem__("audio", o["utterances"][0]["audio"][:-1]))
    with pytest.raises(DatasetError, match=r"d\.jsonl:2.*train0_u0"):
        load_dataset(path)


@pytest.mark.parametrize("edit, pattern", [
    (lambda o: o["utterances"][0].pop("video"), "missing video"),
    (lambda o: o["utterances"][0].__setitem__("label", "rage"), "unknown label"),
    (lambda o: o["utterances"][0].__setitem__("label", 99), "label"),
    (lambda o: o["utterances"][0].__setitem__("text", ["x"]), "malformed text"),
    (lambda o: o.__setitem__("utterances", []), "no utterances"),
])
def test_bad_records_rejected(tmp_path, edit, pattern):
    path = tmp_path / "d.jsonl"
    write_dataset(generate_synthetic(small_cfg(), "train"), path)
    rewrite(path, edit)
    with pytest.raises(DatasetError, match=pattern):
        load_dataset(path)


def test_malformed_json_and_manifest(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    with pytest.raises(DatasetError, match="bad.jsonl:1"):
        load_dataset(bad)
    bad.write_text(json.dumps({"hello": 1}) + "\n")
    with pytest.raises(DatasetError, match="manifest"):
        load_dataset(bad)
    (tmp_path / "empty.jsonl").write_text("")
    with pytest.raises(DatasetError, match="empty"):
        load_dataset(tmp_path / "empty.jsonl")


def test_histogram_matches_generator(tmp_path):
    ds = generate_synthetic(small_cfg(n_train=50), "train")
    write_dataset(ds, tmp_path / "h.jsonl")
    loaded = load_dataset(tmp_path / "h.jsonl")
    assert loaded.label_histogram() == ds.manifest.meta["label_counts"]
    assert sum(loaded.label_histogram()) == loaded.n_utterances


def test_histogram_tamper_detected(tmp_path):
    path = tmp_path / "h.jsonl"
    write_dataset(generate_synthetic(small_cfg(), "train"), path)
    lines = path.read_text().splitlines()
    head = json.loads(lines[0])
    head["meta"]["label_counts"][0] += 1
    lines[0] = json.dumps(head)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetError, match="histogram"):
        load_dataset(path)


# --- generator -------------------------------------------------------------------------

def test_generator_deterministic(tmp_path):
    write_dataset(generate_synthetic(small_cfg(seed=3)), tmp_path / "a.jsonl")
    write_dataset(generate_synthetic(small_cfg(seed=3)), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    write_dataset(generate_synthetic(small_cfg(seed=4)), tmp_path / "c.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() != (tmp_path / "c.jsonl").read_bytes()


def test_splits_share_latents_but_differ():
    splits = generate_splits(small_cfg())
    assert set(splits) == {"train", "valid", "test"}
    assert len(splits["train"]) == 12 and len(splits["test"]) == 4
    a, b = splits["valid"].dialogues[0], splits["test"].dialogues[0]
    assert not np.array_equal(a.utterances[0].text, b.utterances[0].text)


def test_absorbing_chain():
    ds = generate_synthetic(small_cfg(p_stay=1.0, n_train=30))
    assert all(len(set(d.labels.tolist())) == 1 for d in ds)


def test_nearest_latent_classifier_exact():
    cfg = small_cfg(inconsistency=0.0, sigma=1e-9, reliability=(1.0, 1.0, 1.0), n_train=30)
    latents = synthetic_latents(cfg)
    ds = generate_synthetic(cfg)
    for m, mod in enumerate(MODALITIES):
        for d in ds:
            X = d.matrix(mod)
            dist = ((X[:, None, :] - latents[m][None]) ** 2).sum(-1)
            np.testing.assert_array_equal(dist.argmin(axis=1), d.labels)


def test_stay_rate_within_three_standard_errors():
    cfg = SynthConfig(n_train=1500, mean_length=9, p_stay=0.7, K=6)
    ds = generate_synthetic(cfg)
    stays = np.concatenate([d.labels[1:] == d.labels[:-1] for d in ds])
    assert stays.size >= 10_000
    se = np.sqrt(0.7 * 0.3 / stays.size)
    assert abs(stays.mean() - 0.7) < 3 * se


def test_lengths_respect_max():
    ds = generate_synthetic(small_cfg(mean_length=20, max_length=5, n_train=20))
    assert max(len(d) for d in ds) <= 5


@pytest.mark.parametrize("bad", [dict(p_stay=1.5), dict(sigma=0.0), dict(reliability=(1, 1)),
                                 dict(inconsistency=-0.1), dict(K=1)])
def test_synth_config_validation(bad):
    with pytest.raises(ValueError):
        SynthConfig(**bad)


# --- batching ---------------------------------------------------------------------------

def test_batch_sizes():
    ds = generate_synthetic(small_cfg(n_train=10))
    assert [len(b) for b in batch_dialogues(ds, 4)] == [4, 4, 2]
    assert n_batches(10, 4) == 3


def test_batch_order_deterministic_and_partition():
    ds = generate_synthetic(small_cfg(n_train=10))
    first = [[d.dialogue_id for d in b] for b in batch_dialogues(ds, 3, seed=5, epoch=1)]
    again = [[d.dialogue_id for d in b] for b in batch_dialogues(ds, 3, seed=5, epoch=1)]
    other = [[d.dialogue_id for d in b] for b in batch_dialogues(ds, 3, seed=5, epoch=2)]
    assert first == again
    assert first != other
    flat = sorted(i for b in first for i in b)
    assert flat == sorted(d.dialogue_id for d in ds)


def test_unshuffled_keeps_file_order():
    ds = generate_synthetic(small_cfg(n_train=5))
    ids = [d.dialogue_id for b in batch_dialogues(ds, 2, seed=None) for d in b]
    assert ids == [d.dialogue_id for d in ds]


def test_batching_errors():
    with pytest.raises(DatasetError):
        list(batch_dialogues([], 2))
    with pytest.raises(ValueError):
        list(batch_dialogues(generate_synthetic(small_cfg()), 0))
