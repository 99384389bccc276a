"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test records a ``CRITERION n: PASS|FAIL`` line; conftest prints them in
the terminal summary.  The expensive tuning-protocol experiment runs once per
session and feeds criteria 1, 5 and 9.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from steerbo import gp
from steerbo.acquisition import EI, LCB, MPI, AcquisitionKind, Incumbent, candidate_set, ei, lcb, mpi, propose_next
from steerbo.bo import RunLog, best_seen_curve, run_random_search
from steerbo.cli import EXIT_OK, main
from steerbo.data import (DatasetSplit, RawFrame, Sample, preprocess, split_dataset, split_sizes,
                          stack_frames, synth_dataset)
from steerbo.metrics import bias_variance, mann_whitney_u, mse
from steerbo.models import build_stlstm, train
from steerbo.nn.convlstm import ConvLSTMParams, convlstm_cell
from steerbo.nn.gradsuite import run_suite
from steerbo.objectives import SyntheticPaperSpace, eval_toy_trainer
from steerbo.search_space import Configuration, build_paper_space, decode

from test_acquisition import _exhaustive, _fitted_model, mc_instances
from test_gp import matern_scalar
from test_metrics import brute_force_p
from test_models import SMALL, _adversarial_split

RESULTS: list[str] = []
SPACE = build_paper_space()
FIXTURE = json.loads((Path(__file__).parent / "fixtures" / "grid_optimum.json").read_text())
PROTOCOL = ["bo-run", "--objective", "synthetic-paper-space", "--n-init", "5", "--n-iter", "20",
            "--runs", "10", "--acq", "lcb,ei,mpi", "--seed", "0"]
TIME_LIMIT = 300.0


def record(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def protocol_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("protocol") / "run"
    t0 = time.perf_counter()
    rc = main(PROTOCOL + ["--out", str(out)])
    return out, rc, time.perf_counter() - t0


# --- 1 ---------------------------------------------------------------------------

def test_criterion_1_budget_fidelity(protocol_run):
    out, rc, elapsed = protocol_run
    logs = sorted((out / "runs").glob("*.jsonl"))
    runs = [RunLog.read_jsonl(p) for p in logs]
    sizes = {len(r.trials) for r in runs}
    monotone = all(np.all(np.diff(best_seen_curve(r)) <= 0) for r in runs)
    csvs = (out / "best_seen.csv").exists() and (out / "final_best_seen.csv").exists()
    ok = rc == EXIT_OK and len(logs) == 30 and sizes == {25} and monotone and csvs \
        and elapsed < TIME_LIMIT
    record(1, ok, f"logs={len(logs)} evals/run={sorted(sizes)} non-increasing={monotone} "
                  f"csvs={csvs} runtime={elapsed:.1f}s (<{TIME_LIMIT:.0f}s)")
    assert ok


# --- 2 ---------------------------------------------------------------------------

def test_criterion_2_acquisition_closed_forms():
    rng = np.random.default_rng(7)
    worst_ei, worst_mpi = 0.0, 0.0
    for mu, sigma, best, xi in mc_instances():
        G = rng.normal(mu, sigma, 1_000_000)
        ei_mc = np.maximum(best - xi - G, 0).mean()
        worst_ei = max(worst_ei, abs(ei(mu, sigma, best, xi) - ei_mc) / ei_mc)
        worst_mpi = max(worst_mpi, abs(mpi(mu, sigma, best, xi) - (G <= best + xi).mean()))
    ei_zero = all(ei(m, 0.0, b, x) == 0.0 for m, b, x in [(0.0, 1.0, 0.01), (2.0, -1.0, 0.0),
                                                         (-3.0, 5.0, 0.1)])
    lcb_mean = all(lcb(m, s, 0.0) == m for m, s in [(0.3, 2.0), (-1.5, 0.1), (7.0, 0.0)])
    ok = worst_ei < 1e-2 and worst_mpi < 1e-2 and ei_zero and lcb_mean
    record(2, ok, f"EI max rel err={worst_ei:.2e} MPI max abs err={worst_mpi:.2e} (<1e-2); "
                  f"EI(sigma=0)=0 {ei_zero}; LCB(xi=0)=mu {lcb_mean}")
    assert ok


# --- 3 ---------------------------------------------------------------------------

def test_criterion_3_gp():
    rng = np.random.default_rng(3)
    X, y = rng.random((8, 3)), rng.standard_normal(8)
    model = gp.fit(X, y, kernel=gp.KernelParams((0.6, 0.4, 0.8), 1.3, 0.0))
    mean, _ = gp.predict_many(model, X)
    interp = float(np.abs(mean - y).max())
    far = gp.predict(model, np.full(3, 1e3))
    revert = max(abs(far.mean - model.y_mean),
                 abs(far.std - math.sqrt(model.kernel.signal_variance) * model.y_std))

    grad_err = 0.0
    for seed in range(20):
        r = np.random.default_rng(seed)
        Xg, yg = r.random((7, 3)), r.standard_normal(7)
        theta = np.r_[np.log(r.uniform(0.2, 1.5, 3)), np.log(r.uniform(0.5, 2)),
                      np.log(r.uniform(1e-3, 0.5))]
        f = lambda t: gp.log_marginal_likelihood(Xg, yg, gp.KernelParams.from_log_vector(t))
        _, g = gp.log_marginal_likelihood(Xg, yg, gp.KernelParams.from_log_vector(theta), True)
        num = np.array([(f(theta + 1e-6 * e) - f(theta - 1e-6 * e)) / 2e-6 for e in np.eye(5)])
        rel = np.abs(g - num) / np.maximum(np.maximum(np.abs(g), np.abs(num)), 1e-6)
        grad_err = max(grad_err, float(rel.max()))

    two_err = 0.0
    for seed in range(20):
        r = np.random.default_rng(100 + seed)
        X2, y2 = r.random((2, 2)), r.standard_normal(2) * 3 + 1
        kern = gp.KernelParams(tuple(r.uniform(0.2, 1.5, 2)), r.uniform(0.5, 2), r.uniform(1e-3, 0.1))
        m2 = gp.fit(X2, y2, kernel=kern)
        u = r.random(2)
        ys = (y2 - y2.mean()) / y2.std()
        s, n2 = kern.signal_variance, kern.noise_variance + m2.jitter
        k12 = matern_scalar(X2[0], X2[1], kern.lengthscales, s)
        Kinv = np.array([[s + n2, -k12], [-k12, s + n2]]) / ((s + n2) ** 2 - k12 ** 2)
        ks = np.array([matern_scalar(u, X2[i], kern.lengthscales, s) for i in range(2)])
        post = gp.predict(m2, u)
        two_err = max(two_err, abs(post.mean - (ks @ Kinv @ ys * y2.std() + y2.mean())),
                      abs(post.std - math.sqrt(s - ks @ Kinv @ ks) * y2.std()))

    ok = interp < 1e-6 and revert < 1e-4 and grad_err < 1e-4 and two_err < 1e-10
    record(3, ok, f"interp={interp:.1e} (<1e-6) reversion={revert:.1e} (<1e-4) "
                  f"LML grad rel={grad_err:.1e} (<1e-4) 2-point={two_err:.1e} (<1e-10)")
    assert ok


# --- 4 ---------------------------------------------------------------------------

def test_criterion_4_inner_argmax():
    mismatches = 0
    for seed in range(10):
        model, y = _fitted_model(seed)
        kind = AcquisitionKind((LCB, EI, MPI)[seed % 3])
        inc = Incumbent(float(y.min()), decode(model.X[np.argmin(y)], SPACE))
        C = candidate_set(SPACE, seed)
        got = propose_next(model, kind, inc, SPACE, seed, candidates=C)
        mismatches += got != decode(C[_exhaustive(model, kind, inc.best_value, C)], SPACE)
    record(4, mismatches == 0, f"{mismatches} mismatches over 10 seeded instances")
    assert mismatches == 0


# --- 5 ---------------------------------------------------------------------------

def test_criterion_5_bo_beats_random(protocol_run):
    out, rc, elapsed = protocol_run
    assert rc == EXIT_OK
    finals: dict[str, list[float]] = {}
    for line in (out / "final_best_seen.csv").read_text().splitlines()[1:]:
        kind, _, value = line.split(",")
        finals.setdefault(kind, []).append(float(value))
    t0 = time.perf_counter()
    objective = SyntheticPaperSpace()
    rand = [float(run_random_search(SPACE, objective, 25, seed).values.min()) for seed in range(10)]
    elapsed += time.perf_counter() - t0
    f_min, f_max = FIXTURE["f_min"], FIXTURE["f_max"]
    threshold = f_min + 0.05 * (f_max - f_min)
    med_rand = float(np.median(rand))
    medians = {k: float(np.median(v)) for k, v in finals.items()}
    hits = sum(v <= threshold for v in finals["LCB"])
    ok = all(m <= med_rand for m in medians.values()) and hits >= 8 and elapsed < TIME_LIMIT
    detail = " ".join(f"{k}={m:.4f}" for k, m in medians.items())
    record(5, ok, f"medians {detail} random={med_rand:.4f}; LCB within 5% of range: {hits}/10 "
                  f"(threshold {threshold:.4f}); runtime={elapsed:.1f}s")
    assert ok


# --- 6 ---------------------------------------------------------------------------

def test_criterion_6_convlstm():
    rng = np.random.default_rng(6)
    p = ConvLSTMParams.zeros(2, 3, (4, 5))
    x = rng.standard_normal((2, 2, 4, 5))
    h0 = rng.standard_normal((2, 3, 4, 5))
    c0 = rng.standard_normal((2, 3, 4, 5))
    h, c = convlstm_cell(x, h0, c0, p)
    closed = max(float(np.abs(c - 0.5 * c0).max()),
                 float(np.abs(h - 0.5 * np.tanh(0.5 * c0)).max()))
    errs = run_suite(seed=0)
    worst = max(errs.values())
    ok = closed < 1e-12 and worst < 1e-4
    record(6, ok, f"zero-weight closed form err={closed:.1e} (<1e-12); gradient suite "
                  f"max rel err={worst:.1e} (<1e-4) over {len(errs)} cases")
    assert ok


# --- 7 ---------------------------------------------------------------------------

# (model, split, mse, bias^2, variance) as published
PUBLISHED_BV = [
    ("PilotNet", "train", 0.0209, 0.0004, 0.0205),
    ("J-Net", "train", 0.0114, 0.0002, 0.0112),
    ("ST-LSTM", "train", 0.0405, 0.0001, 0.0404),
    ("BO_ST-LSTM", "train", 0.1831, 0.0002, 0.1829),
    ("PilotNet", "validation", 0.6814, 0.0350, 0.6464),
    ("J-Net", "validation", 0.5842, 0.0440, 0.5402),
    ("ST-LSTM", "validation", 0.6139, 0.0755, 0.5384),
    ("BO_ST-LSTM", "validation", 0.5019, 0.0130, 0.4881),
]
# three independently rounded 4-decimal values can disagree by up to 1.5 units in the last place
PUBLISHED_TOL = 1.5e-4


def test_criterion_7_metric_identities():
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 200))
        y = rng.normal(0, rng.uniform(0.1, 5), n)
        y_hat = y + rng.normal(rng.uniform(-2, 2), rng.uniform(0.01, 3), n)
        b2, var = bias_variance(y, y_hat)
        m = mse(y, y_hat)
        worst = max(worst, abs(b2 + var - m) / m)
    mw_ok = True
    for n in range(1, 9):
        for m in range(1, 9):
            a, b = rng.integers(0, 6, n).astype(float), rng.integers(0, 6, m).astype(float)
            for alt in ("two-sided", "less", "greater"):
                mw_ok &= abs(mann_whitney_u(a, b, alt, method="exact").p_value
                             - brute_force_p(a, b, alt)[1]) < 1e-12
    textbook = mann_whitney_u([1, 2], [3, 4], "less").p_value
    consistent = sum(abs(b2 + v - m) <= PUBLISHED_TOL for _, _, m, b2, v in PUBLISHED_BV)
    ok = worst < 1e-12 and mw_ok and abs(textbook - 1 / 6) < 1e-15
    record(7, ok, f"mse=bias^2+variance max rel err={worst:.1e} (<1e-12); exact MW = enumeration "
                  f"for n,m<=8: {mw_ok}; p([1,2]<[3,4])={textbook:.6f}; published bias/variance rows "
                  f"consistent: {consistent}/{len(PUBLISHED_BV)} (see per-row checks)")
    assert ok


@pytest.mark.parametrize("row", [
    pytest.param(r, id=f"{r[0]}-{r[1]}",
                 marks=[pytest.mark.xfail(strict=True, reason="published row does not add up: "
                                          "0.0130 + 0.4881 = 0.5011, not 0.5019")]
                 if r[:2] == ("BO_ST-LSTM", "validation") else [])
    for r in PUBLISHED_BV])
def test_criterion_7_published_row(row):
    name, split, m, b2, v = row
    ok = abs(b2 + v - m) <= PUBLISHED_TOL
    RESULTS.append(f"CRITERION 7 [published {name} {split}]: {'PASS' if ok else 'FAIL'}  "
                   f"{b2:.4f} + {v:.4f} = {b2 + v:.4f} vs {m:.4f}")
    assert ok


# --- 8 ---------------------------------------------------------------------------

def test_criterion_8_pipeline(monkeypatch):
    rng = np.random.default_rng(8)
    sizes_ok = True
    for h, w in [(160, 320), (256, 455), (120, 150), (300, 640)]:
        frame = RawFrame(rng.integers(0, 256, (h, w, 3), dtype=np.uint8), 0, 0.0)
        sizes_ok &= preprocess(frame).shape == (66, 200, 3)
    n = 11
    images = [np.full((2, 2, 1), float(i)) for i in range(n)]
    samples = stack_frames(images, list(range(n)))
    stack_ok = len(samples) == n - 2 and all(s.label == i + 2 and s.tensor[-1, 0, 0, 0] == i + 2
                                             for i, s in enumerate(samples))
    split_ok = split_sizes(39000) == (24960, 6240, 7800)
    split = split_dataset([Sample(np.zeros((3, 1, 1, 1)), 0.0)] * 39000)
    split_ok &= (len(split.train), len(split.validation), len(split.test)) == (24960, 6240, 7800)

    data = split_dataset(synth_dataset(130, (8, 16), seed=0))
    cfg = Configuration({"convlstm1_maps": 4, "convlstm2_maps": 4, "convlstm3_maps": 4,
                         "convlstm4_maps": 4, "conv3d_maps": 1, "fc_neurons": 5, "dropout": 0.0,
                         "learning_rate": 1e-3})
    start = eval_toy_trainer(cfg, data, seed=0, epochs=0).value
    res = eval_toy_trainer(cfg, data, seed=0, epochs=15, batch_size=50, patience=5)
    again = eval_toy_trainer(cfg, data, seed=0, epochs=15, batch_size=50, patience=5)
    d = res.diagnostics
    trainer_ok = res.value < start and d["epochs_run"] <= 15 and res.value == again.value

    big = DatasetSplit(data.train * 2, data.validation, [])
    net = build_stlstm(SMALL, (3, 8, 16, 1), seed=0)
    batches, forward = [], net.forward
    monkeypatch.setattr(net, "forward", lambda x, train=False:
                        (batches.append(len(x)) if train else None) or forward(x, train))
    train(net, big, 1e-3, epochs=1, batch_size=50)
    n = len(big.train)
    batch_ok = sorted(batches, reverse=True) == [50] * (n // 50) + ([n % 50] if n % 50 else [])
    rep = train(build_stlstm(SMALL, (3, 6, 8, 1), seed=0), _adversarial_split(), 1e-2,
                epochs=15, patience=5)
    patience_ok = rep.early_stopped and rep.epochs_run == 5
    ok = sizes_ok and stack_ok and split_ok and trainer_ok and batch_ok and patience_ok
    record(8, ok, f"66x200 outputs={sizes_ok} n-2 stacking={stack_ok} 39000 split={split_ok}; "
                  f"toy val MSE {start:.4f} -> {res.value:.4f} in {d['epochs_run']} epochs "
                  f"(cap 15), deterministic={res.value == again.value}; batches of 50={batch_ok}; "
                  f"stops after 5 worse epochs={patience_ok}")
    assert ok


# --- 9 ---------------------------------------------------------------------------

def test_criterion_9_determinism(protocol_run, tmp_path):
    out, rc, _ = protocol_run
    again = tmp_path / "again"
    assert main(PROTOCOL + ["--out", str(again)]) == EXIT_OK == rc
    names = ["best_seen.csv", "final_best_seen.csv"]
    same = all((out / f).read_bytes() == (again / f).read_bytes() for f in names)
    record(9, same, "CSVs byte-identical across reruns: " + ", ".join(names))
    assert same
