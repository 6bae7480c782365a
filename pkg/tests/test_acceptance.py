"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line in ``RESULTS``; the terminal summary
prints them after the run. Heavy fixtures (the 20-scene 256x256 suite and
its holograms) are shared between criteria 6, 7 and 8.
"""

import contextlib
import math
import time

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from conftest import band_limited_field, config_for, field_psnr, flat_frame, naive_asm, smooth_image, windowed_image
from layercgh import storage
from layercgh.cli import main as cli_main
from layercgh.encoding import dpac_decode, dpac_encode
from layercgh.fields import ComplexField, OpticalConfig, RgbdFrame, amplitude_of, complement, compute_z_max, phase_of
from layercgh.generation import amplitude_projection_refine, generate_advlbm, generate_aplbm, generate_color
from layercgh.layering import LayerGrid, band_mask, build_layer_grid, one_sided_mask
from layercgh.pipeline import evaluate_all, make_suite, run_method
from layercgh.propagation import PropagationOptions, propagate
from layercgh.quality import evaluate_sample, psnr, ssim
from layercgh.scenes import SceneParams

RESULTS: dict[int, str] = {}
N_SUITE = 20
SUITE_SEED = 2024


class Notes(list):
    """Detail strings for the result line; ``extra_seconds`` counts time
    already spent in shared fixtures."""

    extra_seconds = 0.0


@contextlib.contextmanager
def criterion(number, title, budget_s):
    start = time.perf_counter()
    notes = Notes()
    try:
        yield notes
        elapsed = time.perf_counter() - start + notes.extra_seconds
        assert elapsed < budget_s, f"took {elapsed:.1f} s, budget {budget_s} s"
    except BaseException as exc:
        RESULTS[number] = f"criterion {number:>2} FAIL  {title}: {exc}".splitlines()[0]
        raise
    detail = "; ".join(notes)
    RESULTS[number] = f"criterion {number:>2} PASS  {title} ({elapsed:.1f} s) {detail}".rstrip()


# shared suite ---------------------------------------------------------------

@pytest.fixture(scope="module")
def suite_config():
    return config_for(256, n_layers=32)


@pytest.fixture(scope="module")
def suite(suite_config):
    t0 = time.perf_counter()
    frames = [f for _, _, f in make_suite(suite_config, SceneParams(), N_SUITE, SUITE_SEED)]
    return frames, time.perf_counter() - t0


@pytest.fixture(scope="module")
def table2(suite):
    """Metrics of all three generators on the suite plus the time it took."""
    frames, setup = suite
    t0 = time.perf_counter()
    out = {}
    for method in ("sm", "adv", "ap"):
        samples = run_method(frames, method)
        out[method] = evaluate_all(samples, frames)
    return out, setup + time.perf_counter() - t0


def mean_psnr(records):
    return float(np.mean([r.psnr_mean for r in records]))


def mean_ssim(records):
    return float(np.mean([r.ssim_mean for r in records]))


# criteria -------------------------------------------------------------------

def test_c01_propagation_oracle():
    with criterion(1, "FFT ASM equals direct DFT on 8x8", 1.0) as notes:
        cfg = OpticalConfig(width=8, height=8, depth_range=1e-4, allow_beyond_zmax=True)
        rng = np.random.default_rng(11)
        worst = 0.0
        for z in (1e-4, 2e-3, -1e-3):
            for bl in (False, True):
                u = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
                got = propagate(ComplexField(u), z, cfg, 0, PropagationOptions(band_limited=bl)).data
                worst = max(worst, float(np.max(np.abs(got - naive_asm(u, z, cfg.wavelengths[0], cfg.pixel_pitch, bl)))))
        notes.append(f"max abs error {worst:.2e}")
        assert worst <= 1e-9


def test_c02_round_trip():
    with criterion(2, "propagation round trip >= 60 dB", 5.0) as notes:
        cfg = config_for(128, allow_beyond_zmax=True)
        worst = math.inf
        for seed, z in enumerate((1e-3, 5e-3, 10e-3)):
            for c in range(3):
                f = band_limited_field(seed)
                back = propagate(propagate(ComplexField(f), z, cfg, c), -z, cfg, c).data
                worst = min(worst, field_psnr(f, back))
        notes.append(f"worst {worst:.1f} dB")
        assert worst >= 60


def test_c03_mask_laws():
    with criterion(3, "mask partition, complement and union laws", 5.0) as notes:
        cfg = config_for(64)
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(1, 12))
            valid = rng.uniform(size=(64, 64)) < 0.8
            valid[0, 0] = True
            depth = rng.choice(np.linspace(0, cfg.depth_range, 17), size=(64, 64))
            grid = build_layer_grid(depth, cfg, valid, n)
            bands = [band_mask(depth, grid, i, 1, valid) for i in range(n)]
            assert np.array_equal(np.sum(bands, axis=0), valid.astype(int))
            for i in range(n):
                m = bands[i]
                assert np.array_equal(complement(m), ~m)
                if i < n - 1:
                    assert np.array_equal(band_mask(depth, grid, i, 2, valid), m | bands[i + 1])
                assert np.array_equal(one_sided_mask(depth, grid, i, 1, valid), np.any(bands[: i + 1], axis=0))
        notes.append("100 random maps")


def test_c04_projection_postcondition():
    with criterion(4, "amplitude projection postcondition per step", 10.0) as notes:
        cfg = config_for(64, n_layers=16)
        rng = np.random.default_rng(4)
        valid = rng.uniform(size=(64, 64)) < 0.8
        depth = np.where(valid, rng.uniform(0.05, 1, (64, 64)), 1.0)
        frame = RgbdFrame(rng.uniform(0.1, 1, (3, 64, 64)) * valid, depth, valid, cfg)
        steps = []
        amplitude_projection_refine(generate_advlbm(frame, 0), frame, 0, observer=steps.append)
        image = frame.intensity[0]
        amp_err = phase_err = 0.0
        for s in steps:
            m = s.mask
            amp_err = max(amp_err, float(np.max(np.abs(amplitude_of(s.result)[m] - image[m]), initial=0)))
            d = np.angle(np.exp(1j * (phase_of(s.result)[m] - phase_of(s.propagated)[m])))
            phase_err = max(phase_err, float(np.max(np.abs(d), initial=0)))
        notes.append(f"{len(steps)} steps, amplitude {amp_err:.1e}, phase {phase_err:.1e}")
        assert len(steps) == 16 and amp_err <= 1e-12 and phase_err <= 1e-12


def test_c05_single_layer_fidelity():
    with criterion(5, "single-plane AP hologram FIP >= 40 dB", 5.0) as notes:
        cfg = config_for(128, n_layers=1)
        frame = flat_frame(cfg, windowed_image(128, seed=5), 2.5e-3)
        sample = generate_color(frame, "ap")
        rec = evaluate_sample(sample, frame)
        notes.append(f"FIP PSNR {min(rec.psnr_fip):.1f} dB (worst channel)")
        assert min(rec.psnr_fip) >= 40


def test_c06_method_ordering(table2):
    with criterion(6, "AP > ADV > SM on 20 scenes at 256x256, 32 layers", 600.0) as notes:
        records, elapsed = table2
        notes.extra_seconds = elapsed
        p = {m: mean_psnr(r) for m, r in records.items()}
        s = {m: mean_ssim(r) for m, r in records.items()}
        notes.append("PSNR " + " / ".join(f"{m} {p[m]:.2f}" for m in p))
        notes.append("SSIM " + " / ".join(f"{m} {s[m]:.3f}" for m in s))
        assert len(records["ap"]) >= 20
        assert p["ap"] > p["adv"] > p["sm"]
        assert s["ap"] > s["adv"] > s["sm"]
        assert p["ap"] - p["adv"] >= 0.5


def test_c07_layer_count_trend(suite):
    with criterion(7, "100 layers beat 10 layers by >= 1 dB", 900.0) as notes:
        frames, _ = suite
        scores, own = {}, {}
        for n in (10, 100):
            layered = [f.with_config(f.config.replace(n_layers=n)) for f in frames]
            samples = run_method(layered, "ap")
            # both layer counts are scored on the same 100-plane FIP grid
            scores[n] = mean_psnr(evaluate_all(samples, layered, 100))
            if n == 10:
                own[n] = mean_psnr(evaluate_all(samples, layered))
        notes.append(f"AP PSNR on 100-plane grid: 10 layers {scores[10]:.2f}, 100 layers {scores[100]:.2f}")
        notes.append(f"10 layers on its own grid {own[10]:.2f}")
        assert scores[100] - scores[10] >= 1.0


def test_c08_depth_range_trend(suite, table2):
    with criterion(8, "depth_range/20 beats the full range", 900.0) as notes:
        frames, _ = suite
        full = mean_psnr(table2[0]["ap"])
        shallow = [f.with_config(f.config.replace(depth_range=f.config.depth_range / 20)) for f in frames]
        narrow = mean_psnr(evaluate_all(run_method(shallow, "ap"), shallow))
        notes.append(f"AP PSNR full {full:.2f}, /20 {narrow:.2f}")
        assert narrow > full


def test_c09_zmax():
    with criterion(9, "z_max 512x512, 3.6 um, 638 nm = 20.72 mm", 0.5) as notes:
        z = compute_z_max(config_for(512), 0)
        notes.append(f"{z * 1e3:.4f} mm")
        assert abs(z - 20.72e-3) <= 0.01e-3


def test_c10_dpac():
    with criterion(10, "DPAC analytic cases and smooth-field round trip", 5.0) as notes:
        assert np.allclose(dpac_encode(np.full((4, 4), np.exp(0.3j))).phase, 0.3, atol=1e-15)
        half = np.full((2, 2), 0.5 + 0j)
        half[0, 0] = 1
        ph = dpac_encode(half).phase
        assert np.isclose(ph[1, 1], np.pi / 3) and np.isclose(ph[0, 1], -np.pi / 3)
        zero = np.zeros((2, 2), complex)
        zero[0, 0] = 1
        ph = dpac_encode(zero).phase
        assert abs(np.exp(1j * ph[1, 1]) + np.exp(1j * ph[1, 0])) < 1e-15
        worst = math.inf
        for seed in range(3):
            f = smooth_image(128, seed) * np.exp(2j * (smooth_image(128, seed + 50) - 0.5))
            worst = min(worst, psnr(np.abs(dpac_decode(dpac_encode(f)).data), np.abs(f)))
        notes.append(f"worst amplitude PSNR {worst:.1f} dB")
        assert worst >= 30


def test_c11_metric_units():
    with criterion(11, "PSNR/SSIM units and reference SSIM agreement", 5.0) as notes:
        rng = np.random.default_rng(0)
        a = rng.uniform(0, 0.9, (64, 64))
        assert abs(psnr(a, a + 0.1) - 20.0) <= 0.01
        assert abs(ssim(a, a) - 1.0) <= 1e-9
        worst = 0.0
        for seed in range(5):
            x = smooth_image(64, seed)
            y = np.clip(x + np.random.default_rng(seed).normal(0, 0.02 * (seed + 1), x.shape), 0, 1)
            ref = structural_similarity(x, y, gaussian_weights=True, sigma=1.5,
                                        use_sample_covariance=False, data_range=1.0)
            worst = max(worst, abs(ssim(x, y) - ref))
        notes.append(f"max SSIM deviation {worst:.1e}")
        assert worst <= 1e-3


def test_c12_determinism_and_storage(tmp_path):
    with criterion(12, "byte-identical pipeline reruns and bitwise storage", 120.0) as notes:
        small = ["--resolution", "64", "--layers", "8", "--workers", "1", "--seed", "12"]
        dirs = []
        for rep in ("a", "b"):
            root = tmp_path / rep
            assert cli_main(["scenegen", "--out", str(root / "frames"), "-n", "3", *small]) == 0
            assert cli_main(["generate", "--frames", str(root / "frames"), "--out", str(root / "holos"),
                             "--method", "ap", *small]) == 0
            assert cli_main(["evaluate", "--holograms", str(root / "holos"), *small]) == 0
            dirs.append(root)
        files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
        for rel in files:
            assert (dirs[0] / rel).read_bytes() == (dirs[1] / rel).read_bytes(), str(rel)
        notes.append(f"{len(files)} artifacts identical")
        data = np.random.default_rng(1).normal(size=(2, 16, 16)).astype(np.float32)
        storage.write_container(tmp_path / "x.kcgh", data, "amplitude")
        assert storage.read_container(tmp_path / "x.kcgh").planes.tobytes() == data.tobytes()
        storage.write_pfm(tmp_path / "x.pfm", data[0])
        assert storage.read_pfm(tmp_path / "x.pfm").tobytes() == data[0].tobytes()


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
