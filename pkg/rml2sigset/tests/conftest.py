import pickle

import h5py
import numpy as np
import pytest

from rml_grids import RML2016A_MODS, RML2016A_SNRS


@pytest.fixture(scope="session")
def fake_rml2016a(tmp_path_factory):
    """RML2016.10a-shaped pickle: 11 classes x 20 SNRs x 6, arrays [6,2,128]."""
    rng = np.random.default_rng(0)
    data = {}
    for mod in RML2016A_MODS:
        for snr in RML2016A_SNRS:
            data[(mod, snr)] = rng.normal(size=(6, 2, 128)).astype(np.float32)
    path = tmp_path_factory.mktemp("rml") / "RML2016.10a_dict.pkl"
    with open(path, "wb") as f:
        pickle.dump(data, f, protocol=2)
    return path, data


@pytest.fixture(scope="session")
def fake_rml2018a(tmp_path_factory):
    """RML2018.01a-shaped HDF5: X [N,1024,2], Y one-hot [N,24], Z [N,1]."""
    rng = np.random.default_rng(1)
    n_per = 5
    snrs = [-10, 0, 10]
    rows = []
    for cid in range(24):
        for snr in snrs:
            for _ in range(n_per):
                rows.append((cid, snr))
    n = len(rows)
    x = rng.normal(size=(n, 1024, 2)).astype(np.float32)
    y = np.zeros((n, 24), dtype=np.int64)
    z = np.zeros((n, 1), dtype=np.int64)
    for i, (cid, snr) in enumerate(rows):
        y[i, cid] = 1
        z[i, 0] = snr
    path = tmp_path_factory.mktemp("rml18") / "GOLD_XYZ.hdf5"
    with h5py.File(path, "w") as f:
        f.create_dataset("X", data=x)
        f.create_dataset("Y", data=y)
        f.create_dataset("Z", data=z)
    return path, x, y, z
