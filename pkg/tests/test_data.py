import numpy as np
import pytest

from vtsnn.data import (
    ClassPattern, Preprocessing, Sample, SyntheticSpec, generate_synthetic, load_dataset,
    load_sample, poisson_events, prepare, preset, stratified_kfold, write_dataset, write_sample,
)
from vtsnn.errors import ParseError, StratificationError, ValidationError
from vtsnn.events import EventStream, Geometry, Modality, encode_stream

G = Geometry(4, 3, 2)


def small_sample(label=1):
    tact = EventStream([5, 9, 40], [0, 3, 1], [0, 1, 0], 4)
    vis = EventStream([7], [G.size - 1], [1], G.size, Modality.VISION, G)
    return Sample(tact, vis, label, {"object_id": "cup", "level": "2", "recording_id": "r1"})


def test_sample_round_trip(tmp_path):
    s = small_sample()
    write_sample(s, tmp_path / "s")
    back = load_sample(tmp_path / "s")
    assert back == s and len(back.tactile) == 3


def test_empty_streams_valid(tmp_path):
    s = Sample(EventStream.empty(4), EventStream.empty(G.size, Modality.VISION, G), 0)
    write_sample(s, tmp_path / "e")
    assert load_sample(tmp_path / "e") == s


def test_overflow_channel(tmp_path):
    write_sample(small_sample(), tmp_path / "s")
    buf = bytearray((tmp_path / "s" / "tact.evst").read_bytes())
    buf[12 + 8] = 200
    (tmp_path / "s" / "tact.evst").write_bytes(bytes(buf))
    with pytest.raises(ValidationError):
        load_sample(tmp_path / "s")


def test_truncated_file(tmp_path):
    write_sample(small_sample(), tmp_path / "s")
    p = tmp_path / "s" / "vis.evst"
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(ParseError):
        load_sample(tmp_path / "s")


def test_csv_sample(tmp_path):
    d = tmp_path / "c"
    d.mkdir()
    (d / "tact.csv").write_text("5,0,1\n9,3,0\n")
    (d / "vis.csv").write_text("")
    (d / "label.txt").write_text("3\n")
    s = load_sample(d, "csv", tactile_channels=4, vision_geometry=G)
    assert s.label == 3 and len(s.tactile) == 2 and len(s.vision) == 0


def test_dataset_round_trip(tmp_path):
    samples = generate_synthetic(preset("two-class"), 6, seed=1)
    write_dataset(samples, tmp_path / "ds")
    assert load_dataset(tmp_path / "ds") == samples
    assert (tmp_path / "ds" / "manifest.csv").read_text().splitlines()[0] == \
        "sample,label,object_id,level,recording_id"


@pytest.mark.parametrize("n_classes,per,train,test", [(20, 15, 240, 60), (2, 50, 80, 20)])
def test_split_sizes(n_classes, per, train, test):
    labels = np.repeat(np.arange(n_classes), per)
    plan = stratified_kfold(labels, 5, seed=3)
    seen = np.zeros(labels.size, dtype=int)
    for k in range(5):
        tr, te = plan.train_test(k)
        assert len(tr) == train and len(te) == test
        assert not set(tr) & set(te)
        seen[te] += 1
        assert len(set(np.bincount(labels[te], minlength=n_classes))) == 1
    assert np.all(seen == 1)


def test_split_uneven_classes():
    labels = np.array([0] * 7 + [1] * 11 + [2] * 5)
    plan = stratified_kfold(labels, 5, seed=0)
    for c in range(3):
        per_fold = np.bincount(plan.folds[labels == c], minlength=5)
        assert per_fold.max() - per_fold.min() <= 1
    sizes = np.bincount(plan.folds, minlength=5)
    assert sizes.max() - sizes.min() <= 1


def test_split_deterministic():
    labels = np.repeat([0, 1, 2], 10)
    a, b = stratified_kfold(labels, 5, 9), stratified_kfold(labels, 5, 9)
    np.testing.assert_array_equal(a.folds, b.folds)


def test_split_too_few():
    with pytest.raises(StratificationError):
        stratified_kfold([0] * 4 + [1] * 10, 5)


def test_zero_rate_is_empty(rng):
    spec = SyntheticSpec([ClassPattern(np.zeros(8))], 1.0, tactile_channels=8,
                         vision_geometry=G)
    s = generate_synthetic(spec, 3)[0]
    assert len(s.tactile) == 0 and len(s.vision) == 0


def test_poisson_concentration(rng):
    lam, T = 40.0, 0.5
    counts = np.array([poisson_events(np.full(3, lam), 0, T, rng)[1].size for _ in range(100)]) / 3
    assert abs(counts.mean() - lam * T) <= 3 * np.sqrt(lam * T)


def test_poisson_rejects_negative(rng):
    with pytest.raises(ValueError):
        poisson_events([-1.0], 0, 1, rng)


def test_nearest_centroid_separates_two_class():
    samples = generate_synthetic(preset("two-class"), 40, seed=2)
    x = np.array([np.bincount(s.tactile.channels, minlength=156) for s in samples], float)
    y = np.array([s.label for s in samples])
    cent = np.array([x[y == c].mean(axis=0) for c in (0, 1)])
    pred = np.argmin(((x[:, None, :] - cent[None]) ** 2).sum(-1), axis=1)
    assert np.all(pred == y)


def test_generation_deterministic():
    a = generate_synthetic(preset("slip-toy"), 4, seed=7)
    b = generate_synthetic(preset("slip-toy"), 4, seed=7)
    assert all(encode_stream(x.vision) == encode_stream(y.vision) for x, y in zip(a, b))
    assert a == b


def test_onset_delays_tactile():
    lab = generate_synthetic(preset("container-toy"), 4, seed=0)[3]
    own = lab.tactile.timestamps[np.isin(lab.tactile.channels, range(21, 28))]
    # only 1 Hz background before contact, 31 Hz after
    assert (own < 2_000_000).sum() < 50
    assert (own >= 2_000_000).sum() > 500


def test_early_toy_window():
    s = generate_synthetic(preset("early-toy"), 40, seed=1)
    own = np.concatenate([x.tactile.timestamps[np.isin(x.tactile.channels,
                                                       range(10 * x.label, 10 * x.label + 10))]
                          for x in s])
    early = (own < 50_000).sum()
    late = (own >= 50_000).sum()
    # 120 Hz in the first 50 ms, background 60 Hz afterwards over twice the time
    assert early > 1.5 * late / 2


def test_prepare_shapes():
    samples = generate_synthetic(preset("slip-toy"), 2, seed=0)
    data = prepare(samples, Preprocessing.slip())
    x, y = data[0]
    assert x["tactile"].data.shape == (156, 150)
    assert x["vision"].data.shape == (100_000, 150)
    assert x["vision"].geometry == Geometry(200, 250, 2)
    assert y == 0
    merged = prepare(samples, Preprocessing(merge_vision_polarity=True), ("vision",))
    assert merged[0][0]["vision"].channel_count == 50_000


def test_container_preprocessing():
    p = Preprocessing.container()
    assert p.t_end == pytest.approx(8.5)
    assert (p.bin_width, p.n_bins) == (0.02, 325)
