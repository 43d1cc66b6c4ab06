import numpy as np
import pytest

from rml2sigset.convert import (
    ConvertError, canonical_name, convert, detect_source,
)
from rml2sigset.sigset import read_sigset

from rml_grids import RML2016A_MODS, RML2016A_SNRS


class TestCanonicalNames:
    @pytest.mark.parametrize("src,want", [
        ("QAM16", "16qam"), ("QAM64", "64qam"), ("8PSK", "8psk"),
        ("BPSK", "bpsk"), ("AM-DSB", "am-dsb"), ("WBFM", "wbfm"),
        ("PAM4", "pam4"), ("GFSK", "gfsk"), ("OOK", "ook"),
        ("256QAM", "256qam"),
    ])
    def test_mapping(self, src, want):
        assert canonical_name(src) == want


class TestDetect:
    def test_rml2016a_shape(self, fake_rml2016a):
        path, _ = fake_rml2016a
        src = detect_source(path, "rml2016a")
        assert len(src.classes) == 11
        assert src.snr_levels == RML2016A_SNRS
        assert src.length == 128
        assert "16qam" in src.classes and "64qam" in src.classes

    def test_rml2018a_shape(self, fake_rml2018a):
        path, *_ = fake_rml2018a
        src = detect_source(path, "rml2018a")
        assert len(src.classes) == 24
        assert src.length == 1024
        assert src.snr_levels == [-10, 0, 10]

    def test_unknown_flavor(self, fake_rml2016a):
        with pytest.raises(ConvertError, match="flavor"):
            detect_source(fake_rml2016a[0], "rml2020")

    def test_unreadable_container(self, tmp_path):
        junk = tmp_path / "junk.pkl"
        junk.write_bytes(b"\x00\x01\x02not a pickle")
        with pytest.raises(ConvertError, match="unreadable"):
            detect_source(junk, "rml2016a")


class TestConvert2016:
    def test_full_counts(self, fake_rml2016a, tmp_path):
        path, _ = fake_rml2016a
        out = tmp_path / "a.sigset"
        src = detect_source(path, "rml2016a")
        n = convert(src, out)
        # 11 classes x 20 SNRs x 6/cell (scaled-down RML2016.10a grid)
        assert n == 11 * 20 * 6
        r = read_sigset(out)
        assert r.num_samples == n and r.length == 128
        assert r.classes == [canonical_name(m) for m in RML2016A_MODS]

    def test_lossless_100_sample_audit(self, fake_rml2016a, tmp_path):
        path, data = fake_rml2016a
        out = tmp_path / "a.sigset"
        src = detect_source(path, "rml2016a")
        convert(src, out)
        r = read_sigset(out)
        # rebuild the expected output order: class-major, snr ascending
        expected = []
        for mod in RML2016A_MODS:
            for snr in RML2016A_SNRS:
                for row in data[(mod, snr)]:
                    expected.append((mod, snr, row))
        rng = np.random.default_rng(7)
        for i in rng.choice(r.num_samples, size=100, replace=False):
            cid, snr, iq = r.read_sample(int(i))
            mod, want_snr, want_iq = expected[i]
            assert r.classes[cid] == canonical_name(mod)
            assert snr == want_snr
            assert iq.tobytes() == np.asarray(want_iq, dtype="<f4").tobytes()

    def test_manifest_stratified_and_seeded(self, fake_rml2016a, tmp_path):
        path, _ = fake_rml2016a
        src = detect_source(path, "rml2016a")
        out1, out2, out3 = (tmp_path / f"{k}.sigset" for k in "abc")
        convert(src, out1, split_seed=5)
        convert(src, out2, split_seed=5)
        convert(src, out3, split_seed=6)
        m1 = (str(out1) + ".manifest")
        assert open(m1).read() == open(str(out2) + ".manifest").read()
        assert open(m1).read() != open(str(out3) + ".manifest").read()
        parts = [line.split()[1] for line in open(m1)]
        # per 6-sample cell: 4 train, 1 val, 1 test
        for lo in range(0, len(parts), 6):
            cell = parts[lo:lo + 6]
            assert sorted(cell).count("train") == 4
            assert cell.count("val") == 1 and cell.count("test") == 1

    def test_class_and_snr_filters(self, fake_rml2016a, tmp_path):
        path, _ = fake_rml2016a
        src = detect_source(path, "rml2016a")
        out = tmp_path / "f.sigset"
        n = convert(src, out, class_filter=["bpsk", "qpsk"], snr_filter=[0, 10])
        assert n == 2 * 2 * 6
        r = read_sigset(out)
        assert r.classes == ["bpsk", "qpsk"]
        snrs = {r.read_sample(i)[1] for i in range(n)}
        assert snrs == {0, 10}

    def test_filters_matching_nothing(self, fake_rml2016a, tmp_path):
        src = detect_source(fake_rml2016a[0], "rml2016a")
        with pytest.raises(ConvertError, match="class filter"):
            convert(src, tmp_path / "x.sigset", class_filter=["nope"])
        with pytest.raises(ConvertError, match="snr filter"):
            convert(src, tmp_path / "x.sigset", snr_filter=[999])


class TestConvert2018:
    def test_counts_and_audit(self, fake_rml2018a, tmp_path):
        path, x, y, z = fake_rml2018a
        src = detect_source(path, "rml2018a")
        out = tmp_path / "b.sigset"
        n = convert(src, out, chunk=16)
        assert n == 24 * 3 * 5
        r = read_sigset(out)
        assert r.length == 1024 and len(r.classes) == 24
        labels = np.argmax(y, axis=1)
        rng = np.random.default_rng(3)
        for i in rng.choice(n, size=100, replace=False):
            cid, snr, iq = r.read_sample(int(i))
            assert cid == labels[i]
            assert snr == int(z[i, 0])
            want = np.ascontiguousarray(x[i].T, dtype="<f4")
            assert iq.tobytes() == want.tobytes()

    def test_class_filter(self, fake_rml2018a, tmp_path):
        src = detect_source(fake_rml2018a[0], "rml2018a")
        out = tmp_path / "c.sigset"
        n = convert(src, out, class_filter=["bpsk", "qpsk", "16qam"], chunk=16)
        assert n == 3 * 3 * 5
        assert read_sigset(out).classes == ["bpsk", "qpsk", "16qam"]
