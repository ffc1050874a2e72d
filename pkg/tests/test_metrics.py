"""Metric oracle tests.

Each metric is checked against an independent reimplementation written
in the plainest possible style (explicit loops, scalar arithmetic) plus
the analytically known values of degenerate inputs.
"""

import json
import math

import numpy as np
import pytest

from egmt.data_pipeline import DataError, save_image
from egmt.losses import FusionLossConfig, ssim_loss
from egmt.metrics import (
    FUSION_COLUMNS,
    FUSION_METRICS,
    classification_metrics,
    evaluate_directory,
    fmi_w,
    mi,
    mi_pair,
    nabf,
    ncie,
    pc_map,
    pc_metric,
    psnr,
    psnr_fusion,
    qabf,
    ssim_metric,
    ssim_pair,
    write_report,
)
from egmt.numerics import Tensor


def rand(shape, seed):
    return np.random.default_rng(seed).random(shape)


# ---------------------------------------------------------------------------
# mutual information


def ref_mi(a, b, bins=256):
    joint = np.zeros((bins, bins))
    for x, y in zip(a.reshape(-1), b.reshape(-1)):
        i = min(int(x * bins), bins - 1)
        j = min(int(y * bins), bins - 1)
        joint[i, j] += 1
    joint /= joint.sum()
    pa, pb = joint.sum(axis=1), joint.sum(axis=0)
    total = 0.0
    for i in range(bins):
        for j in range(bins):
            if joint[i, j] > 0:
                total += joint[i, j] * math.log2(joint[i, j] / (pa[i] * pb[j]))
    return total


def test_mi_of_identical_equals_marginal_entropy():
    img = rand((16, 16), 0)
    hist, _ = np.histogram(img, bins=256, range=(0.0, 1.0))
    p = hist / hist.sum()
    p = p[p > 0]
    entropy = -float(np.sum(p * np.log2(p)))
    assert abs(mi_pair(img, img) - entropy) < 1e-12


def test_mi_with_constant_is_zero():
    assert mi_pair(rand((16, 16), 1), np.full((16, 16), 0.25)) == 0.0


def test_mi_matches_double_loop_reference():
    a, b = rand((8, 8), 2), rand((8, 8), 3)
    assert abs(mi_pair(a, b) - ref_mi(a, b)) < 1e-12


def test_mi_symmetric():
    a, b = rand((16, 16), 4), rand((16, 16), 5)
    assert abs(mi_pair(a, b) - mi_pair(b, a)) < 1e-10


def test_mi_sums_both_sources():
    f, a, b = rand((8, 8), 6), rand((8, 8), 7), rand((8, 8), 8)
    assert abs(mi(f, a, b) - (mi_pair(f, a) + mi_pair(f, b))) < 1e-14


# ---------------------------------------------------------------------------
# psnr


def test_psnr_uniform_offset_exactly_twenty_db():
    ref = np.full((8, 8), 0.4)
    assert abs(psnr(ref - 0.1, ref) - 20.0) < 1e-9


def test_psnr_identical_hits_sentinel():
    img = rand((8, 8), 9)
    assert psnr(img, img) == 100.0


def test_psnr_matches_direct_mse():
    f, r = rand((12, 12), 10), rand((12, 12), 11)
    mse = float(np.mean((f - r) ** 2))
    assert abs(psnr(f, r) - 10.0 * math.log10(1.0 / mse)) < 1e-12
    assert abs(psnr_fusion(f, r, r) - psnr(f, r)) < 1e-12


# ---------------------------------------------------------------------------
# ssim


def test_ssim_identical_is_one():
    img = rand((32, 32), 12)
    assert abs(ssim_metric(img, img, img) - 1.0) < 1e-12


def test_ssim_anticorrelated_checkerboards():
    checker = np.indices((32, 32)).sum(axis=0) % 2 * 0.8 + 0.1
    assert ssim_metric(1.0 - checker, checker, checker) < 0.1


def test_ssim_metric_complements_loss_for_identical_sources():
    f, s = rand((32, 32), 13), rand((32, 32), 14)
    loss = float(ssim_loss(Tensor(f[None]), Tensor(s[None]), Tensor(s[None])).data)
    assert abs(ssim_metric(f, s, s) - (1.0 - loss / 2.0)) < 1e-12


# ---------------------------------------------------------------------------
# edge transfer: independent transcription


SX = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
SY = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]


def ref_edge_model(img):
    h, w = img.shape
    padded = np.pad(img, 1, mode="symmetric")
    g = np.zeros((h, w))
    alpha = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            gx = gy = 0.0
            for dy in range(3):
                for dx in range(3):
                    gx += SX[dy][dx] * padded[y + dy, x + dx]
                    gy += SY[dy][dx] * padded[y + dy, x + dx]
            g[y, x] = math.sqrt(gx * gx + gy * gy)
            alpha[y, x] = math.atan(gy / gx) if gx != 0 else (0.0 if gy == 0 else math.copysign(math.pi / 2, gy))
    return g, alpha


def ref_quality(ga, aa, gf, af):
    if ga > gf:
        rel_g = gf / ga if ga > 0 else 0.0
    else:
        rel_g = ga / gf if gf > 0 else 0.0
    rel_a = 1.0 - abs(aa - af) / (math.pi / 2)
    qg = 1.0 / (1.0 + math.exp(-10.0 * (rel_g - 0.5)))
    qa = 1.0 / (1.0 + math.exp(-20.0 * (rel_a - 0.75)))
    return qg * qa


def ref_qabf_nabf(f, a, b):
    gf, af = ref_edge_model(f)
    ga, aa = ref_edge_model(a)
    gb, ab = ref_edge_model(b)
    num = num_n = den = 0.0
    for y in range(f.shape[0]):
        for x in range(f.shape[1]):
            qaf = ref_quality(ga[y, x], aa[y, x], gf[y, x], af[y, x])
            qbf = ref_quality(gb[y, x], ab[y, x], gf[y, x], af[y, x])
            num += qaf * ga[y, x] + qbf * gb[y, x]
            if gf[y, x] > ga[y, x] and gf[y, x] > gb[y, x]:
                num_n += (1 - qaf) * ga[y, x] + (1 - qbf) * gb[y, x]
            den += ga[y, x] + gb[y, x]
    return num / den, num_n / den


def test_qabf_identical_high():
    img = rand((16, 16), 15)
    assert qabf(img, img, img) >= 0.98


def test_qabf_constant_fused_near_zero():
    assert qabf(np.full((16, 16), 0.5), rand((16, 16), 16), rand((16, 16), 17)) < 0.01


def test_qabf_nabf_match_transcription():
    f, a, b = rand((16, 16), 18), rand((16, 16), 19), rand((16, 16), 20)
    q_ref, n_ref = ref_qabf_nabf(f, a, b)
    assert abs(qabf(f, a, b) - q_ref) < 1e-12
    assert abs(nabf(f, a, b) - n_ref) < 1e-12


def test_qabf_nabf_in_unit_interval():
    for seed in range(3):
        f, a, b = rand((12, 12), seed), rand((12, 12), seed + 50), rand((12, 12), seed + 90)
        assert 0.0 <= qabf(f, a, b) <= 1.0
        assert 0.0 <= nabf(f, a, b) <= 1.0


def test_nabf_identical_zero_and_noise_positive():
    img = rand((16, 16), 21)
    assert nabf(img, img, img) == 0.0
    noisy = np.clip(img + 0.2 * (rand((16, 16), 22) - 0.5), 0.0, 1.0)
    assert nabf(noisy, img, img) > 0.0


# ---------------------------------------------------------------------------
# ncie


def ref_ncie(f, a, b, bins):
    def ranks(img):
        flat = img.reshape(-1)
        order = sorted(range(flat.size), key=lambda i: (flat[i], i))
        r = [0] * flat.size
        for rank, idx in enumerate(order):
            r[idx] = rank * bins // flat.size
        return r

    def ncc(ra, rb):
        counts = {}
        for i, j in zip(ra, rb):
            counts[(i, j)] = counts.get((i, j), 0) + 1
        n = len(ra)
        h = -sum((c / n) * math.log(c / n) for c in counts.values()) / math.log(bins)
        return min(1.0, 2.0 - h)

    rf, ra, rb = ranks(f), ranks(a), ranks(b)
    r = np.eye(3)
    r[0, 1] = r[1, 0] = ncc(ra, rb)
    r[0, 2] = r[2, 0] = ncc(ra, rf)
    r[1, 2] = r[2, 1] = ncc(rb, rf)
    value = 1.0
    for lam in np.linalg.eigvalsh(r):
        if lam > 0:
            value += (lam / 3.0) * math.log(lam / 3.0) / math.log(bins)
    return value


def test_ncie_identical_is_one():
    img = rand((16, 16), 23)
    assert ncie(img, img, img) == 1.0


def test_ncie_independent_floor_matches_analytic_value():
    a, b, c = rand((512, 512), 24), rand((512, 512), 25), rand((512, 512), 26)
    floor = 1.0 - math.log(3.0) / math.log(32.0)
    assert abs(ncie(c, a, b, bins=32) - floor) < 1e-4


def test_ncie_matches_transcription():
    f, a, b = rand((16, 16), 27), rand((16, 16), 28), rand((16, 16), 29)
    assert abs(ncie(f, a, b, bins=64) - ref_ncie(f, a, b, 64)) < 1e-12


def test_ncie_in_unit_interval():
    for seed in range(3):
        f = rand((16, 16), seed + 200)
        a = np.clip(f + 0.1 * rand((16, 16), seed + 300), 0, 1)
        v = ncie(f, a, f)
        assert 0.0 < v <= 1.0


# ---------------------------------------------------------------------------
# phase congruency


def test_pc_map_of_constant_is_zero():
    assert np.all(pc_map(np.full((32, 32), 0.7)) == 0.0)


def test_pc_metric_constant_fused_is_zero():
    assert pc_metric(np.full((32, 32), 0.5), rand((32, 32), 30), rand((32, 32), 31)) == 0.0


def test_pc_metric_identical_beats_perturbations():
    img = rand((32, 32), 32)
    ident = pc_metric(img, img, img)
    blurred = np.pad(img, 1, mode="edge")
    blurred = (
        blurred[:-2, 1:-1] + blurred[2:, 1:-1] + blurred[1:-1, :-2] + blurred[1:-1, 2:]
    ) / 4.0
    noisy = np.clip(img + 0.3 * (rand((32, 32), 33) - 0.5), 0, 1)
    assert ident > pc_metric(blurred, img, img)
    assert ident > pc_metric(noisy, img, img)
    assert ident == pytest.approx(1.0, abs=1e-9)


def test_pc_map_bounded():
    m = pc_map(rand((32, 32), 34))
    assert np.all(m >= 0.0)
    assert np.all(m <= 1.0 + 1e-9)


# ---------------------------------------------------------------------------
# wavelet feature mutual information


def ref_fmi_component(df, ds, bins=256):
    lo_f, hi_f = df.min(), df.max()
    lo_s, hi_s = ds.min(), ds.max()
    nf = (df - lo_f) / (hi_f - lo_f)
    ns = (ds - lo_s) / (hi_s - lo_s)
    joint = np.zeros((bins, bins))
    for x, y in zip(nf, ns):
        joint[min(int(x * bins), bins - 1), min(int(y * bins), bins - 1)] += 1
    joint /= joint.sum()
    pa, pb = joint.sum(axis=1), joint.sum(axis=0)
    info = ha = hb = 0.0
    for i in range(bins):
        if pa[i] > 0:
            ha -= pa[i] * math.log2(pa[i])
        if pb[i] > 0:
            hb -= pb[i] * math.log2(pb[i])
        for j in range(bins):
            if joint[i, j] > 0:
                info += joint[i, j] * math.log2(joint[i, j] / (pa[i] * pb[j]))
    return 2.0 * info / (ha + hb)


def ref_haar_details(img):
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    out = []
    for name in ("lh", "hl", "hh"):
        for y in range(0, h, 2):
            for x in range(0, w, 2):
                a, b = img[y, x], img[y, x + 1]
                c, d = img[y + 1, x], img[y + 1, x + 1]
                if name == "lh":
                    out.append(abs((a - b + c - d) / 2))
                elif name == "hl":
                    out.append(abs((a + b - c - d) / 2))
                else:
                    out.append(abs((a - b - c + d) / 2))
    return np.array(out)


def test_fmi_identical_is_one():
    img = rand((32, 32), 35)
    assert abs(fmi_w(img, img, img) - 1.0) < 1e-12


def test_fmi_noise_near_floor():
    img = rand((64, 64), 36)
    assert fmi_w(rand((64, 64), 37), img, img) < 0.6


def test_fmi_matches_transcription():
    f, s = rand((16, 16), 38), rand((16, 16), 39)
    expected = ref_fmi_component(ref_haar_details(f), ref_haar_details(s))
    assert abs(fmi_w(f, s, s) - expected) < 1e-12


# ---------------------------------------------------------------------------
# flip invariance property


def test_all_fusion_metrics_invariant_under_simultaneous_flip():
    f, a, b = rand((32, 32), 40), rand((32, 32), 41), rand((32, 32), 42)
    for name, fn in FUSION_METRICS.items():
        direct = fn(f, a, b)
        flipped = fn(f[:, ::-1].copy(), a[:, ::-1].copy(), b[:, ::-1].copy())
        assert abs(direct - flipped) < 1e-12, name


# ---------------------------------------------------------------------------
# classification


def ref_rl_auc(scores, labels):
    rl_values = []
    n, k = scores.shape
    for i in range(n):
        pos = [c for c in range(k) if labels[i, c] == 1]
        neg = [c for c in range(k) if labels[i, c] == 0]
        if not pos or not neg:
            continue
        mis = 0.0
        for p in pos:
            for q in neg:
                if scores[i, p] < scores[i, q]:
                    mis += 1.0
                elif scores[i, p] == scores[i, q]:
                    mis += 0.5
        rl_values.append(mis / (len(pos) * len(neg)))
    aucs = []
    for c in range(k):
        pos = [i for i in range(n) if labels[i, c] == 1]
        neg = [i for i in range(n) if labels[i, c] == 0]
        if not pos or not neg:
            continue
        wins = 0.0
        for p in pos:
            for q in neg:
                if scores[p, c] > scores[q, c]:
                    wins += 1.0
                elif scores[p, c] == scores[q, c]:
                    wins += 0.5
        aucs.append(wins / (len(pos) * len(neg)))
    return float(np.mean(rl_values)), float(np.mean(aucs))


def test_classification_perfect_predictions():
    labels = [np.array([1, 0, 1, 0, 0, 0, 0, 0, 0]), np.array([0, 1, 0, 0, 1, 0, 0, 0, 1])]
    scores = [np.where(y == 1, 0.9, 0.1) for y in labels]
    m = classification_metrics(scores, labels)
    assert m == {"HL": 0.0, "RL": 0.0, "mAP": 1.0, "AUC": 1.0, "JI": 1.0, "F1": 1.0}


def test_classification_all_wrong_hamming_is_one():
    labels = [np.array([1, 0, 1]), np.array([0, 1, 1])]
    scores = [1.0 - y for y in labels]
    m = classification_metrics(scores, labels)
    assert m["HL"] == 1.0


def test_classification_rl_auc_match_pairwise_oracle():
    r = np.random.default_rng(43)
    scores = r.random((20, 9))
    labels = (r.random((20, 9)) < 0.4).astype(np.float64)
    labels[:, 0] = 1.0  # keep one dense class
    labels[0] = np.array([1, 0, 1, 0, 1, 0, 0, 1, 0])
    with np.errstate(all="raise"):
        m = classification_metrics(list(scores), list(labels))
    rl_ref, auc_ref = ref_rl_auc(scores, labels)
    assert m["RL"] == rl_ref
    assert m["AUC"] == auc_ref


def test_classification_degenerate_class_warns_and_excludes():
    # class 0 all-positive (AUC undefined, AP = 1), class 1 never positive
    labels = [np.array([1, 0, 0]), np.array([1, 0, 1])]
    scores = [np.array([0.9, 0.2, 0.1]), np.array([0.8, 0.3, 0.7])]
    with pytest.warns(UserWarning, match=r"\[1\] without positives.*\[0\] without negatives"):
        m = classification_metrics(scores, labels)
    assert m["AUC"] == 1.0  # only the last class counts, perfectly ranked
    assert m["mAP"] == 1.0  # classes 0 and 2 both rank perfectly


def test_classification_all_degenerate_rejected():
    labels = [np.array([1, 1]), np.array([1, 1])]
    scores = [np.array([0.9, 0.9]), np.array([0.8, 0.8])]
    with pytest.warns(UserWarning):
        with pytest.raises(ValueError):
            classification_metrics(scores, labels)


def test_classification_accepts_tensors_and_threshold():
    labels = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    scores = [Tensor(np.array([0.6, 0.4])), Tensor(np.array([0.3, 0.8]))]
    m = classification_metrics(scores, labels, threshold=0.7)
    assert m["HL"] == 0.25  # 0.6 < 0.7 misses one positive


# ---------------------------------------------------------------------------
# directory reports


def _write_triple(tmp_path, stem, fused, ir, vis):
    for sub in ("fused", "ir", "vis"):
        (tmp_path / sub).mkdir(exist_ok=True)
    save_image(tmp_path / "fused" / f"{stem}_fused.png", fused)
    save_image(tmp_path / "ir" / f"{stem}.png", ir)
    save_image(tmp_path / "vis" / f"{stem}.png", vis)


def test_evaluate_directory_identical_triple(tmp_path):
    img = rand((32, 32), 44)
    _write_triple(tmp_path, "pair0", img, img, img)
    report = evaluate_directory(tmp_path / "fused", tmp_path / "ir", tmp_path / "vis")
    assert list(report.rows) == ["pair0"]
    assert report.rows["pair0"]["SSIM"] == pytest.approx(1.0, abs=1e-9)
    assert report.means["SSIM"] == report.rows["pair0"]["SSIM"]


def test_evaluate_directory_empty_returns_empty_report(tmp_path):
    for sub in ("fused", "ir", "vis"):
        (tmp_path / sub).mkdir()
    report = evaluate_directory(tmp_path / "fused", tmp_path / "ir", tmp_path / "vis")
    assert report.rows == {} and report.means == {}
    assert report.to_csv() == "image," + ",".join(FUSION_COLUMNS) + "\n"


def test_evaluate_directory_accepts_tagged_shared_source_dir(tmp_path):
    # preprocess layout: both modalities in one directory, _ir/_vi suffixes
    img = rand((16, 16), 52)
    (tmp_path / "patches").mkdir()
    (tmp_path / "fused").mkdir()
    save_image(tmp_path / "patches" / "p_y0_x0_ir.png", img)
    save_image(tmp_path / "patches" / "p_y0_x0_vi.png", img)
    save_image(tmp_path / "fused" / "p_y0_x0_ir_fused.png", img)
    report = evaluate_directory(tmp_path / "fused", tmp_path / "patches", tmp_path / "patches")
    assert list(report.rows) == ["p_y0_x0_ir"]
    assert report.rows["p_y0_x0_ir"]["SSIM"] == pytest.approx(1.0, abs=1e-9)


def test_evaluate_directory_missing_counterpart_names_stem(tmp_path):
    img = rand((16, 16), 45)
    _write_triple(tmp_path, "pair0", img, img, img)
    (tmp_path / "ir" / "pair0.png").unlink()
    with pytest.raises(DataError, match="pair0"):
        evaluate_directory(tmp_path / "fused", tmp_path / "ir", tmp_path / "vis")


def test_evaluate_directory_mean_is_row_mean(tmp_path):
    for i in range(3):
        f = rand((16, 16), 46 + i)
        _write_triple(tmp_path, f"pair{i}", f, rand((16, 16), 60 + i), rand((16, 16), 70 + i))
    report = evaluate_directory(tmp_path / "fused", tmp_path / "ir", tmp_path / "vis")
    for c in FUSION_COLUMNS:
        expected = sum(report.rows[s][c] for s in report.rows) / 3.0
        assert abs(report.means[c] - expected) < 1e-12


def test_report_csv_and_json_layout(tmp_path):
    img = rand((16, 16), 50)
    _write_triple(tmp_path, "z", img, img, img)
    _write_triple(tmp_path, "a", img, img, img)
    report = evaluate_directory(tmp_path / "fused", tmp_path / "ir", tmp_path / "vis")
    write_report(report, tmp_path / "r.csv", tmp_path / "r.json")
    lines = (tmp_path / "r.csv").read_text().strip().splitlines()
    assert lines[0] == "image,PC,SSIM,MI,Q_abf,PSNR,FMI_w,N_abf,NCIE"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["a", "z", "MEAN"]
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["columns"] == FUSION_COLUMNS
    assert set(doc["rows"]) == {"a", "z"}
