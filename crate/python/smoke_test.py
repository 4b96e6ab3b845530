"""Smoke test for the vocalpath Python bindings.

Build the extension first, e.g. `pip install --no-build-isolation ./crates/python`
or copy target/release/libvocalpath_py.so next to this file as vocalpath.so.
"""

import json
import math
import os
import random
import sys
import tempfile

import vocalpath as vp


def tone_bursts(rate=16000.0, seconds=1.0):
    rng = random.Random(1)
    n = int(rate * seconds)
    out = []
    for i in range(n):
        t = i / rate
        burst = 0.2 <= t < 0.35 or 0.6 <= t < 0.8
        s = 0.5 * math.sin(2 * math.pi * 2000.0 * t) if burst else 0.0
        out.append(s + rng.gauss(0.0, 0.001))
    return vp.AudioClip(out, rate, "bursts")


def check_signal_chain(tmp):
    clip = tone_bursts()
    path = os.path.join(tmp, "bursts.wav")
    vp.write_wav(clip, path)
    back = vp.load_wav(path)
    assert len(back) == len(clip) and back.sample_rate_hz == 16000.0

    filtered = vp.bandpass(vp.resample(back, 22050.0), 500.0, 6000.0)
    spec = vp.stft_spectrogram(filtered, n_fft=512, hop=128)
    frames, bins = spec.shape
    assert bins == 257 and frames == len(spec.frame_times_s)

    noise = vp.estimate_noise_profile(spec, 0.5)
    gated = vp.spectral_gate(spec, noise, 10.0)
    segs = vp.segment_spectrogram(gated, threshold_db=-30.0, min_dur_s=0.02, min_gap_s=0.01)
    assert len(segs) == 2, segs
    assert abs(segs[0].onset_s - 0.2) < 0.02 and abs(segs[1].offset_s - 0.8) < 0.02
    image = vp.resize_to(spec, 16, 16)
    assert len(image) == 16 and all(0.0 <= v <= 1.0 for row in image for v in row)
    print("signal chain ok:", segs)


def check_models():
    rng = random.Random(3)
    data = [[rng.random() for _ in range(20)] for _ in range(32)]
    vae = vp.Vae(20, hidden_dim=16, latent_dim=3, seed=3)
    history = vae.train(data, epochs=50, batch_size=8, lr=2e-3)
    assert history[-1] < history[0]
    z = vae.embed(data[0])
    assert len(z) == 3 and len(vae.reconstruct(z)) == 20
    copy = vp.Vae.from_json(vae.to_json())
    assert copy.embed(data[0]) == z

    pca = vp.pca_fit(data, 3)
    assert len(pca.project(data[0])) == 3
    assert abs(sum(vp.pca_fit(data, 20).explained_variance_ratio) - 1.0) < 1e-9

    assert abs(vp.cosine_distance([1.0, 0.0], [0.0, 1.0]) - 1.0) < 1e-12
    pts = [[math.cos(k), math.sin(k)] for k in range(5)]
    c = vp.path_complexity(pts, [0.1 * k for k in range(5)], [0.1 * k + 0.05 for k in range(5)])
    assert c > 0.0
    dist, path = vp.dtw(pts, pts)
    assert dist == 0.0 and path[0] == (0, 0)

    seqs = []
    for _ in range(3):
        x = [[1.0, -1.0]]
        for _ in range(100):
            x.append([0.5 * x[-1][0] + rng.gauss(0, 0.1), 0.5 * x[-1][1] + rng.gauss(0, 0.1)])
        seqs.append(x)
    var = vp.var_fit(seqs, 1)
    a = var.coefficients[0]
    assert abs(a[0][0] - 0.5) < 0.1 and abs(a[1][1] - 0.5) < 0.1
    assert math.isfinite(var.predictability(seqs[0]))

    points = [[rng.gauss(m, 0.3), rng.gauss(m, 0.3)] for m in (-2.0, 2.0) for _ in range(50)]
    gmm = vp.gmm_fit(points, components=2, seed=1)
    ll = gmm.log_likelihood
    assert all(b >= a - 1e-9 for a, b in zip(ll, ll[1:]))
    assert math.isfinite(gmm.log_density([0.0, 0.0]))
    expected = -math.log(2 * math.pi)
    assert abs(vp.standard_normal_log_density([0.0, 0.0]) - expected) < 1e-12
    print("models ok: var diag", round(a[0][0], 3), round(a[1][1], 3))


def check_pipeline(tmp):
    audio = os.path.join(tmp, "audio")
    os.mkdir(audio)
    vp.write_wav(tone_bursts(), os.path.join(audio, "bout_00.wav"))
    vp.write_wav(tone_bursts(seconds=1.2), os.path.join(audio, "bout_01.wav"))
    cfg = os.path.join(tmp, "config.json")
    with open(cfg, "w") as f:
        json.dump({"audio_dir": "audio", "output_dir": "out", "vae_epochs": 5,
                   "vae_latent": 2, "vae_hidden": 8, "unit_rows": 8, "unit_cols": 8}, f)

    try:
        vp.run_pipeline("analyze", cfg)
    except vp.MissingArtifactError as e:
        assert isinstance(e, vp.VocalpathError)
    else:
        raise AssertionError("analyze should need embeddings")

    vp.run_pipeline("all", cfg, seed=4)
    out = os.path.join(tmp, "out")
    for name in ("segments.jsonl", "model.json", "embeddings.jsonl", "metrics.csv",
                 "dtw_matrix.csv", "latent_scatter.svg"):
        assert os.path.isfile(os.path.join(out, name)), name

    with open(cfg, "w") as f:
        json.dump({"audio_dir": "audio", "bogus": 1}, f)
    try:
        vp.run_pipeline("segment", cfg)
    except vp.ConfigError:
        pass
    else:
        raise AssertionError("unknown key should be rejected")
    print("pipeline ok")


def main():
    print("vocalpath", vp.__version__)
    with tempfile.TemporaryDirectory() as tmp:
        check_signal_chain(tmp)
        check_models()
        check_pipeline(tmp)
    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
