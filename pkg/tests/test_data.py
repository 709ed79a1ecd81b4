import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import ks_2samp

from hanatomy import ConfigError, DataError, FormatError
from hanatomy.data import LabeledDataset, gen_gaussian_mixture, load_csv, load_idx, write_csv, write_idx


def test_mixture_counts_and_balance():
    ds = gen_gaussian_mixture(10, 12, 13, seed=0)
    assert ds.n == 130 and ds.balanced
    assert ds.class_counts.tolist() == [13] * 10


def test_mixture_is_deterministic():
    a = gen_gaussian_mixture(3, 5, 20, seed=42)
    b = gen_gaussian_mixture(3, 5, 20, seed=42)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)


def test_zero_separation_classes_indistinguishable():
    ds = gen_gaussian_mixture(2, 4, 5000, separation=0.0, seed=3)
    direction = np.random.default_rng(0).standard_normal(4)
    proj = ds.features @ direction
    assert ks_2samp(proj[ds.labels == 0], proj[ds.labels == 1]).pvalue > 0.01


def test_separated_classes_distinguishable():
    ds = gen_gaussian_mixture(2, 4, 500, separation=3.0, seed=3)
    mu0 = ds.features[ds.labels == 0].mean(axis=0)
    mu1 = ds.features[ds.labels == 1].mean(axis=0)
    proj = ds.features @ (mu1 - mu0)
    assert ks_2samp(proj[ds.labels == 0], proj[ds.labels == 1]).pvalue < 1e-10


def test_mixture_rejects_bad_config():
    with pytest.raises(ConfigError):
        gen_gaussian_mixture(5, 3, 10)
    with pytest.raises(ConfigError):
        gen_gaussian_mixture(1, 3, 10)


@given(st.integers(1, 5), st.lists(st.integers(0, 4), min_size=1, max_size=40))
def test_class_index_partitions(extra, labels):
    C = max(labels) + extra
    ds = LabeledDataset(np.zeros((len(labels), 2)), labels, C)
    joined = np.sort(np.concatenate(ds.class_index))
    assert joined.tolist() == list(range(len(labels)))
    for c, idx in enumerate(ds.class_index):
        assert np.all(ds.labels[idx] == c)
    assert ds.balanced == (len(set(ds.class_counts.tolist())) == 1)
    assert ds.subset(np.arange(len(labels))[::-1]).class_counts.tolist() == ds.class_counts.tolist()


def test_dataset_validation():
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((2, 2)), [0, 3], 3)
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((2, 2)), [0], 3)
    with pytest.raises(DataError):
        LabeledDataset([[0.0, np.nan]], [0], 1)


def test_standardized_is_opt_in():
    ds = gen_gaussian_mixture(3, 4, 10, seed=1)
    z = ds.standardized()
    assert np.allclose(z.features.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(z.features.std(axis=0), 1)
    assert not np.allclose(ds.features.mean(axis=0), 0, atol=1e-3)


def test_csv_hand_written(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1.5,2,0\n-3,4.25,1\n0,0,2\n")
    ds = load_csv(path)
    assert ds.features.tolist() == [[1.5, 2.0], [-3.0, 4.25], [0.0, 0.0]]
    assert ds.labels.tolist() == [0, 1, 2] and ds.n_classes == 3


def test_csv_bad_cell_names_line(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,2,0\n1,abc,1\n")
    with pytest.raises(DataError, match=r":2:"):
        load_csv(path)


@pytest.mark.parametrize("text,what", [
    ("1,2,0\n1,1\n", "expected 3 cells"),
    ("1,2,0\n1,2,x\n", "not an integer"),
    ("1,2,0\n1,2,-1\n", "out of range"),
])
def test_csv_errors(tmp_path, text, what):
    path = tmp_path / "d.csv"
    path.write_text(text)
    with pytest.raises(DataError, match=what):
        load_csv(path)


def test_csv_label_out_of_declared_range(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,2,0\n1,2,3\n")
    with pytest.raises(DataError, match=":2:"):
        load_csv(path, n_classes=3)


def test_csv_round_trip(tmp_path):
    ds = gen_gaussian_mixture(4, 6, 7, seed=2)
    path = tmp_path / "mix.csv"
    write_csv(ds, path)
    back = load_csv(path, has_header=True, n_classes=4)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)


def idx_pair(tmp_path, n_per_class=15, C=3, shape=(2, 3)):
    r = np.random.default_rng(0)
    labels = np.tile(np.arange(C), n_per_class)
    pix = r.integers(0, 256, size=(len(labels), shape[0] * shape[1]))
    pix[0, 0] = 255
    ds = LabeledDataset(pix / 255.0, labels, C)
    img, lab = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(ds, img, lab, shape)
    return img, lab, pix, labels


def test_idx_scaling_and_limit(tmp_path):
    img, lab, pix, labels = idx_pair(tmp_path)
    ds = load_idx(img, lab)
    assert ds.n == 45 and ds.n_features == 6
    assert ds.features[0, 0] == 1.0
    assert np.allclose(ds.features, pix / 255.0, atol=0)
    small = load_idx(img, lab, limit_per_class=10)
    assert small.n == 30 and small.balanced
    # first occurrences, file order kept
    assert small.labels.tolist() == labels[:30].tolist()


def test_idx_gzip(tmp_path):
    img, lab, _, _ = idx_pair(tmp_path)
    gz_img, gz_lab = tmp_path / "img.gz", tmp_path / "lab.gz"
    gz_img.write_bytes(gzip.compress(img.read_bytes()))
    gz_lab.write_bytes(gzip.compress(lab.read_bytes()))
    assert np.array_equal(load_idx(gz_img, gz_lab).features, load_idx(img, lab).features)


def test_idx_wrong_magic(tmp_path):
    img, lab, _, _ = idx_pair(tmp_path)
    blob = bytearray(img.read_bytes())
    blob[3] = 0x01
    img.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="0x00000803"):
        load_idx(img, lab)


def test_idx_truncated_and_mismatch(tmp_path):
    img, lab, _, _ = idx_pair(tmp_path)
    good = img.read_bytes()
    img.write_bytes(good[:-5])
    with pytest.raises(FormatError, match="truncated"):
        load_idx(img, lab)
    img.write_bytes(good)
    blob = lab.read_bytes()
    lab.write_bytes(blob[:4] + struct.pack(">I", 44) + blob[8:-1])
    with pytest.raises(FormatError, match="45 images but 44 labels"):
        load_idx(img, lab)
