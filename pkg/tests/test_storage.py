import json
import struct
import threading
import warnings

import numpy as np
import pytest

from conftest import config_for
from layercgh.fields import ComplexField
from layercgh.scenes import SceneParams, synthesize_scene
from layercgh.storage import (
    FormatError,
    Kind,
    ProvenanceWarning,
    ValidationError,
    load_frame,
    load_hologram,
    read_container,
    read_manifest,
    read_pfm,
    save_frame,
    save_hologram,
    write_container,
    write_manifest,
    write_pfm,
)


@pytest.mark.parametrize("kind", [Kind.INTENSITY, Kind.DEPTH, Kind.AMPLITUDE, Kind.PHASE, Kind.MASK])
def test_real_round_trip_is_bitwise(tmp_path, kind):
    data = np.random.default_rng(int(kind)).uniform(size=(3, 7, 5)).astype(np.float32)
    write_container(tmp_path / "c.kcgh", data, kind)
    back = read_container(tmp_path / "c.kcgh")
    assert back.kind is kind and back.channels == 3
    assert back.planes.tobytes() == data.tobytes()


def test_header_layout(tmp_path):
    write_container(tmp_path / "c.kcgh", np.zeros((2, 3), np.float32), "depth")
    blob = (tmp_path / "c.kcgh").read_bytes()
    assert blob[:4] == b"KCGH"
    assert struct.unpack_from("<IIIIB", blob, 4) == (1, 3, 2, 1, int(Kind.DEPTH))
    assert len(blob) == 21 + 6 * 4


def test_complex_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.normal(size=(2, 8, 8)) + 1j * rng.normal(size=(2, 8, 8))
    save_hologram(tmp_path / "h.kcgh", [ComplexField(d) for d in data])
    c = read_container(tmp_path / "h.kcgh")
    assert c.kind is Kind.COMPLEX and c.channels == 2 and c.planes.shape == (4, 8, 8)
    assert np.array_equal(c.planes[0], np.abs(data[0]).astype(np.float32))
    back = np.stack([f.data for f in load_hologram(tmp_path / "h.kcgh")])
    assert np.allclose(back, data, rtol=1e-6, atol=1e-6)
    # second generation is bitwise stable
    save_hologram(tmp_path / "h2.kcgh", load_hologram(tmp_path / "h.kcgh"))
    assert read_container(tmp_path / "h2.kcgh").planes.tobytes() == c.planes.tobytes()


def test_phase_endpoints(tmp_path):
    data = np.array([[-1.0 + 1e-300j, -1.0 + 0j, 1j]])
    write_container(tmp_path / "p.kcgh", data, Kind.COMPLEX)
    phase = read_container(tmp_path / "p.kcgh").planes[1]
    assert phase[0, 1] == 1.0  # angle pi
    assert phase[0, 2] == np.float32(0.75)
    eps = np.array([[np.exp(1j * (-np.pi + 1e-3))]])
    write_container(tmp_path / "q.kcgh", eps, Kind.COMPLEX)
    assert 0 < read_container(tmp_path / "q.kcgh").planes[1, 0, 0] < 1e-3


def test_truncated_and_corrupt(tmp_path):
    p = tmp_path / "c.kcgh"
    write_container(p, np.ones((4, 4)), "intensity")
    blob = p.read_bytes()
    p.write_bytes(blob[:-1])
    with pytest.raises(FormatError):
        read_container(p)
    p.write_bytes(blob[:10])
    with pytest.raises(FormatError):
        read_container(p)
    p.write_bytes(b"XCGH" + blob[4:])
    with pytest.raises(FormatError):
        read_container(p)
    p.write_bytes(blob[:4] + struct.pack("<I", 2) + blob[8:])
    with pytest.raises(FormatError):
        read_container(p)
    p.write_bytes(blob[:20] + b"\x09" + blob[21:])
    with pytest.raises(FormatError):
        read_container(p)


def test_validation(tmp_path):
    with pytest.raises(ValidationError):
        write_container(tmp_path / "a", np.array([[np.nan]]), "amplitude")
    with pytest.raises(ValidationError):
        write_container(tmp_path / "a", np.array([[np.inf]]), "amplitude")
    with pytest.raises(ValidationError):
        write_container(tmp_path / "a", np.array([[1.5]]), "intensity")
    with pytest.raises(ValidationError):
        write_container(tmp_path / "a", np.array([[-0.1]]), "depth")
    write_container(tmp_path / "a", np.array([[7.5]]), "amplitude")
    # nothing partial left behind after a rejected write
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a"]


def test_pfm_exact_bytes(tmp_path):
    write_pfm(tmp_path / "g.pfm", np.array([[0.5]]))
    assert (tmp_path / "g.pfm").read_bytes() == b"Pf\n1 1\n-1.0\n" + struct.pack("<f", 0.5)


def test_pfm_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    gray = rng.normal(size=(5, 7)).astype(np.float32)
    color = rng.normal(size=(4, 3, 3)).astype(np.float32)
    write_pfm(tmp_path / "g.pfm", gray)
    write_pfm(tmp_path / "c.pfm", color)
    assert read_pfm(tmp_path / "g.pfm").tobytes() == gray.tobytes()
    assert read_pfm(tmp_path / "c.pfm").tobytes() == color.tobytes()
    # first stored row is the bottom image row
    payload = (tmp_path / "g.pfm").read_bytes()[len(b"Pf\n7 5\n-1.0\n"):]
    assert np.frombuffer(payload[: 7 * 4], "<f4").tobytes() == gray[-1].tobytes()


def test_pfm_big_endian(tmp_path):
    rows = [[1.0, 2.0], [3.0, 4.0]]  # top to bottom
    payload = struct.pack(">4f", 3.0, 4.0, 1.0, 2.0)
    (tmp_path / "be.pfm").write_bytes(b"Pf\n2 2\n1.0\n" + payload)
    assert read_pfm(tmp_path / "be.pfm").tolist() == rows


@pytest.mark.parametrize(
    "blob",
    [b"P6\n1 1\n-1.0\n\0\0\0\0", b"Pf\n1\n-1.0\n\0\0\0\0", b"Pf\n1 1\n0\n\0\0\0\0", b"Pf\n1 1\n-1.0\n\0\0", b"Pf\n"],
)
def test_pfm_malformed(tmp_path, blob):
    (tmp_path / "x.pfm").write_bytes(blob)
    with pytest.raises(FormatError):
        read_pfm(tmp_path / "x.pfm")


def records(n, start=0, config_hash="abc"):
    return [
        {"sample_id": f"s{i:05d}", "seed": i, "config_hash": config_hash, "method": "ap", "psnr": 20.0 + i}
        for i in range(start, start + n)
    ]


def test_manifest_round_trip(tmp_path):
    write_manifest(tmp_path, records(3))
    write_manifest(tmp_path, records(2, start=3))
    assert read_manifest(tmp_path) == records(5)
    assert len((tmp_path / "manifest.jsonl").read_text().splitlines()) == 5


def test_manifest_rejects_duplicates(tmp_path):
    write_manifest(tmp_path, records(2))
    before = (tmp_path / "manifest.jsonl").read_bytes()
    with pytest.raises(ValueError):
        write_manifest(tmp_path, records(1, start=1))
    with pytest.raises(ValueError):
        write_manifest(tmp_path, records(1, start=5) * 2)
    assert (tmp_path / "manifest.jsonl").read_bytes() == before


def test_manifest_provenance_warning(tmp_path):
    write_manifest(tmp_path, records(2))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        read_manifest(tmp_path, "abc")
    with pytest.warns(ProvenanceWarning):
        read_manifest(tmp_path, "zzz")


def test_manifest_concurrent_appends(tmp_path):
    threads = [threading.Thread(target=write_manifest, args=(tmp_path, records(3, start=3 * t))) for t in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    ids = [r["sample_id"] for r in read_manifest(tmp_path)]
    assert sorted(ids) == [f"s{i:05d}" for i in range(24)]


def test_manifest_bad_line(tmp_path):
    (tmp_path / "manifest.jsonl").write_text(json.dumps({"sample_id": "a"}) + "\n{oops\n")
    with pytest.raises(FormatError):
        read_manifest(tmp_path)


def test_frame_round_trip(tmp_path):
    cfg = config_for(48)
    frame = synthesize_scene(SceneParams(seed=4), cfg)
    files = save_frame(tmp_path, "s00000", frame)
    back = load_frame(tmp_path, files, cfg)
    assert np.array_equal(back.validity, frame.validity)
    assert np.array_equal(back.intensity, frame.intensity.astype(np.float32))
    assert np.array_equal(back.depth, frame.depth.astype(np.float32))
