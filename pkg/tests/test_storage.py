import numpy as np
import numpy.testing as npt
import pytest

from cirkit.composer import init_params, load_checkpoint, save_checkpoint
from cirkit.errors import DataError
from cirkit.storage import read_embeddings, read_jsonl, sidecar_path, write_embeddings

from conftest import random_unit


def _matrix(rng, n=5, d=8):
    return np.stack([random_unit(rng, d) for _ in range(n)])


def test_embeddings_roundtrip(tmp_path, rng):
    path = tmp_path / "items.cirf"
    matrix = _matrix(rng)
    ids = [f"id{i}" for i in range(5)]
    captions = [f"caption {i}" for i in range(5)]
    write_embeddings(path, ids, matrix, captions)
    got_ids, got_captions, got = read_embeddings(path)
    assert got_ids == ids
    assert got_captions == captions
    npt.assert_array_equal(got, matrix.astype(np.float32))


def test_embeddings_roundtrip_without_captions(tmp_path, rng):
    path = tmp_path / "items.cirf"
    write_embeddings(path, ["a", "b"], _matrix(rng, n=2))
    _, captions, _ = read_embeddings(path)
    assert captions is None


def test_header_layout(tmp_path, rng):
    path = tmp_path / "items.cirf"
    write_embeddings(path, ["a", "b", "c"], _matrix(rng, n=3, d=4))
    blob = path.read_bytes()
    assert blob[:4] == b"CIRF"
    assert int.from_bytes(blob[4:6], "little") == 1  # version
    assert int.from_bytes(blob[6:14], "little") == 3  # count
    assert int.from_bytes(blob[14:18], "little") == 4  # dim
    assert len(blob) == 18 + 3 * 4 * 4


def test_bad_magic_rejected(tmp_path, rng):
    path = tmp_path / "items.cirf"
    write_embeddings(path, ["a", "b"], _matrix(rng, n=2))
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(DataError, match="magic"):
        read_embeddings(path)


def test_truncated_payload_rejected(tmp_path, rng):
    path = tmp_path / "items.cirf"
    write_embeddings(path, ["a", "b"], _matrix(rng, n=2))
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(DataError, match="bytes"):
        read_embeddings(path)


def test_sidecar_misalignment_rejected(tmp_path, rng):
    path = tmp_path / "items.cirf"
    write_embeddings(path, ["a", "b"], _matrix(rng, n=2))
    sidecar = sidecar_path(path)
    sidecar.write_text(sidecar.read_text().splitlines()[0] + "\n")
    with pytest.raises(DataError, match="sidecar"):
        read_embeddings(path)


def test_duplicate_ids_rejected(tmp_path, rng):
    with pytest.raises(DataError, match="unique"):
        write_embeddings(tmp_path / "x.cirf", ["a", "a"], _matrix(rng, n=2))


def test_read_jsonl_reports_line(tmp_path):
    path = tmp_path / "rows.jsonl"
    path.write_text('{"ok": 1}\nnot json\n')
    with pytest.raises(DataError, match=":2"):
        read_jsonl(path)


def test_checkpoint_roundtrip(tmp_path):
    params = init_params(d_img=4, d_h=6, d_out=5, vocab_buckets=16, seed=3)
    params.tau = 0.2
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, params, seed=3, step=17)
    loaded, manifest = load_checkpoint(path)
    assert manifest["dims"] == {"d_img": 4, "d_h": 6, "d_out": 5, "vocab_buckets": 16}
    assert manifest["seed"] == 3 and manifest["step"] == 17
    assert loaded.tau == pytest.approx(0.2)
    # weights survive the float32 blob roundtrip
    for name, arr in params.array_items():
        npt.assert_array_equal(
            getattr(loaded, name), arr.astype(np.float32).astype(np.float64)
        )


def test_checkpoint_missing_blob(tmp_path):
    params = init_params(d_img=3, d_h=4, d_out=3, vocab_buckets=8)
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, params)
    path.with_suffix(".bin").unlink()
    with pytest.raises(DataError, match="malformed|cannot"):
        load_checkpoint(path)
