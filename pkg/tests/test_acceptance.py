"""Acceptance criteria, one check per criterion at its stated tolerance.

Each ``check_*`` returns ``(passed, detail)``. Under pytest every check is a
test and a PASS/FAIL line per criterion is printed in the terminal summary;
``python tests/test_acceptance.py`` runs them all and prints the same lines.

Set ``FOAL_ASTE_DATA`` to a directory holding ``14res/``, ``14lap/``,
``15res/``, ``16res/`` with ``{train,dev,test}_triplets.txt`` to run the
dataset fidelity check; without it that criterion is skipped.
"""
import os
import random
import statistics
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES  # noqa: E402
from oracles import aste_brute, contrastive_brute, f1_brute, median_distance, mmd_naive  # noqa: E402

from foal.adversarial import AdversarialSchedule, gradient_reversal  # noqa: E402
from foal.cli import main as cli_main  # noqa: E402
from foal.config import RunConfig, apply_overrides, load_transfer_pair  # noqa: E402
from foal.data import PUBLISHED_STATISTICS, Sentence, Sentiment, Span, Triplet  # noqa: E402
from foal.evaluation import discrepancy_report, evaluate, exact_match_f1, mmd  # noqa: E402
from foal.objectives import FeatureSet, aste_loss, contrastive_loss  # noqa: E402
from foal.trainer import batch_losses, build_model, train  # noqa: E402


def _report(name, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


# --- 1. contrastive loss vs double loop -------------------------------------

def check_contrastive_oracle(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(n):
        dim = int(rng.integers(1, 17))
        n_s, n_t = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        S = rng.normal(size=(n_s, dim))
        T = rng.normal(size=(n_t, dim))
        ls = rng.integers(0, 3, n_s)
        lt = rng.integers(0, 3, n_t)
        conf = rng.uniform(size=n_t)
        conf[rng.uniform(size=n_t) < 0.3] = 0.93  # exercise the strict boundary
        tau = float(rng.choice([1.0, 20.0]))
        t = float(rng.choice([0.0, 0.93]))
        got = contrastive_loss(
            FeatureSet(torch.tensor(S), torch.tensor(ls), torch.ones(n_s, dtype=torch.float64), "source"),
            FeatureSet(torch.tensor(T), torch.tensor(lt), torch.tensor(conf), "target", True),
            t,
            tau,
        )
        want = contrastive_brute(S.tolist(), ls.tolist(), T.tolist(), lt.tolist(), conf.tolist(), t, tau)
        worst = max(worst, abs(float(got) - want))
    elapsed = time.perf_counter() - start
    return worst <= 1e-9 and elapsed < 30, f"max |diff| {worst:.2e} over {n} instances (<= 1e-9), {elapsed:.1f}s (< 30s)"


# --- 2. end-to-end gradient check --------------------------------------------

GRADCHECK_OVERRIDES = [
    "dtype=float64", "hidden_size=6", "num_buckets=64", "width_dim=3", "distance_dim=4",
    "span_hidden=5", "pair_hidden=5", "lambda=0.3",
    "t=0",  # a fresh model is never 93% confident; t=0 keeps the contrastive terms in the loss
]


def _gradcheck_sentences():
    src = Sentence(
        "the soup was very salty".split(), "src",
        [Triplet(Span(1, 1), Span(4, 4), Sentiment.NEGATIVE)],
    )
    tgt = Sentence("battery life is great".split(), "tgt")
    return src, tgt


def check_gradient(per_tensor=25, eps=1e-6):
    start = time.perf_counter()
    src, tgt = _gradcheck_sentences()
    # first init whose pseudo-labels agree with some source label, so that the
    # contrastive terms are part of the checked gradient
    for seed in range(100):
        config = apply_overrides(RunConfig(), GRADCHECK_OVERRIDES + [f"train.seed={seed}"])
        model = build_model(config)
        model.train()

        def loss_fn():
            losses = batch_losses(model, [src], [tgt], config)
            return losses["l_total"], losses["l_contra"].item()

        loss, l_contra = loss_fn()
        if l_contra > 0:
            break
    model.zero_grad()
    loss.backward()
    groups = {
        "encoder": list(model.encoder.named_parameters()),
        "width_embedding": list(model.width_embedding.named_parameters()),
        "distance_embedding": list(model.distance_embedding.named_parameters()),
        "span_ffn": list(model.span_ffn.named_parameters()),
        "pair_ffn": list(model.pair_ffn.named_parameters()),
    }
    rng = random.Random(0)
    errors = {}
    for group, params in groups.items():
        analytic, numeric = [], []
        for _, p in params:
            flat, grad = p.data.view(-1), p.grad.view(-1)
            nonzero = torch.nonzero(grad).view(-1).tolist()
            picks = rng.sample(nonzero, min(per_tensor, len(nonzero)))
            for idx in picks:
                old = flat[idx].item()
                with torch.no_grad():
                    flat[idx] = old + eps
                    up = loss_fn()[0].item()
                    flat[idx] = old - eps
                    down = loss_fn()[0].item()
                    flat[idx] = old
                analytic.append(grad[idx].item())
                numeric.append((up - down) / (2 * eps))
        a, n = np.array(analytic), np.array(numeric)
        errors[group] = float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-30)) if len(a) else float("nan")
    elapsed = time.perf_counter() - start
    ok = all(e <= 1e-4 for e in errors.values()) and elapsed < 60 and l_contra > 0
    detail = ", ".join(f"{g} {e:.1e}" for g, e in errors.items())
    return ok, f"rel. err {detail} (<= 1e-4); l_contra {l_contra:.2f} > 0 (seed {seed}); {elapsed:.1f}s (< 60s)"


# --- 3. aste_loss ------------------------------------------------------------

def check_aste_oracle(n=500, seed=1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        ns, npair = int(rng.integers(1, 30)), int(rng.integers(0, 30))
        span_logits = rng.normal(scale=4, size=(ns, 3))
        pair_logits = rng.normal(scale=4, size=(npair, 4))
        ys, yp = rng.integers(0, 3, ns), rng.integers(0, 4, npair)
        got = aste_loss(
            torch.log_softmax(torch.tensor(span_logits), -1), torch.tensor(ys),
            torch.log_softmax(torch.tensor(pair_logits), -1), torch.tensor(yp),
        )
        want = aste_brute(span_logits.tolist(), ys.tolist(), pair_logits.tolist(), yp.tolist())
        worst = max(worst, abs(float(got) - want))
    return worst <= 1e-9, f"max |diff| {worst:.2e} over {n} instances (<= 1e-9)"


# --- 4. F1 -------------------------------------------------------------------

def _random_triplet(rng):
    a = sorted(rng.choices(range(6), k=2))
    o = sorted(rng.choices(range(6), k=2))
    return Triplet(Span(*a), Span(*o), rng.choice(list(Sentiment)))


def check_f1_oracle(n=1000, seed=2):
    rng = random.Random(seed)
    count_mismatch, worst = 0, 0.0
    for _ in range(n):
        size = rng.randint(0, 8)
        gold = [{_random_triplet(rng) for _ in range(rng.randint(0, 4))} for _ in range(size)]
        pred = [
            {t for t in g if rng.random() < 0.6} | {_random_triplet(rng) for _ in range(rng.randint(0, 3))}
            for g in gold
        ]
        r = exact_match_f1(pred, gold)
        n_pred, n_gold, n_correct, p, rc, f = f1_brute(pred, gold)
        count_mismatch += (r.num_pred, r.num_gold, r.num_correct) != (n_pred, n_gold, n_correct)
        worst = max(worst, abs(r.precision - p), abs(r.recall - rc), abs(r.f1 - f))
    ok = count_mismatch == 0 and worst <= 1e-12
    return ok, f"{count_mismatch} count mismatches (= 0), max |diff| P/R/F1 {worst:.1e} (<= 1e-12) over {n} corpora"


# --- 5. MMD ------------------------------------------------------------------

def check_mmd(n=200, seed=3):
    rng = np.random.default_rng(seed)
    self_worst = sym_worst = naive_worst = 0.0
    for _ in range(n):
        dim = int(rng.integers(1, 8))
        x = rng.normal(size=(int(rng.integers(1, 10)), dim))
        y = rng.normal(loc=rng.normal(), size=(int(rng.integers(1, 10)), dim))
        self_worst = max(self_worst, mmd(x, x))
        sym_worst = max(sym_worst, abs(mmd(x, y) - mmd(y, x)))
        bw = median_distance(x.tolist(), y.tolist())
        naive_worst = max(naive_worst, abs(mmd(x, y) - mmd_naive(x.tolist(), y.tolist(), bw)))
    ok = self_worst <= 1e-12 and sym_worst <= 1e-12 and naive_worst <= 1e-9
    return ok, f"mmd(X,X) {self_worst:.1e} (<= 1e-12), symmetry {sym_worst:.1e} (<= 1e-12), vs naive {naive_worst:.1e} (<= 1e-9) on {n} pairs"


# --- 6. overfit ---------------------------------------------------------------

def check_overfit():
    start = time.perf_counter()
    config = apply_overrides(RunConfig(), ["lambda=0", "max_steps=300", "selection_split=none", "synthetic_train=20"])
    pair = load_transfer_pair(config.data)
    model = train(pair, config).restore_model()
    f1 = evaluate(model, pair.source_train).f1
    elapsed = time.perf_counter() - start
    return f1 >= 0.95 and elapsed < 120, f"train F1 {f1:.3f} (>= 0.95) on {len(pair.source_train)} sentences, {elapsed:.1f}s (< 120s)"


# --- 7. direction of effect ---------------------------------------------------

# Desk-scale experiment: a 100-sentence synthetic source corpus with larger
# lexicons, the toy encoder trained at a classifier-like rate, 400 steps.
DIRECTION_OVERRIDES = [
    "synthetic_train=100", "synthetic_aspect_vocab=60", "synthetic_opinion_vocab=40",
    "max_steps=400", "lr_encoder=1e-3", "selection_split=none",
]
DIRECTION_SEEDS = range(5)


def direction_runs(overrides=DIRECTION_OVERRIDES, seeds=DIRECTION_SEEDS, lams=(0.0, 0.3), log=print):
    """phrase domain_mmd and train F1 for every (lambda, seed)."""
    results = {lam: [] for lam in lams}
    for lam in lams:
        for seed in seeds:
            config = apply_overrides(RunConfig(), list(overrides) + [f"lambda={lam}", f"train.seed={seed}", f"encoder.seed={seed}"])
            pair = load_transfer_pair(config.data)
            model = train(pair, config).restore_model()
            rep = discrepancy_report(model, pair.source_train, pair.target_test)
            f1 = evaluate(model, pair.source_train).f1
            results[lam].append((rep.values["phrase"]["domain_mmd"], f1))
            log(f"  lambda={lam} seed={seed}: phrase domain_mmd {results[lam][-1][0]:.4f} train F1 {f1:.3f}")
    return results


def check_direction():
    start = time.perf_counter()
    res = direction_runs()
    base_mmd = statistics.median(m for m, _ in res[0.0])
    foal_mmd = statistics.median(m for m, _ in res[0.3])
    base_f1 = statistics.median(f for _, f in res[0.0])
    foal_f1 = statistics.median(f for _, f in res[0.3])
    reduction = 1 - foal_mmd / base_mmd
    elapsed = time.perf_counter() - start
    ok = reduction >= 0.10 and abs(foal_f1 - base_f1) <= 0.05 and elapsed < 900
    return ok, (
        f"median phrase domain_mmd {base_mmd:.4f} (lambda=0) -> {foal_mmd:.4f} (lambda=0.3), "
        f"reduction {100 * reduction:.1f}% (>= 10%); train F1 {base_f1:.3f} vs {foal_f1:.3f} (within 0.05); "
        f"{elapsed:.0f}s (< 900s)"
    )


# --- 8. dataset fidelity -------------------------------------------------------

def check_dataset_fidelity(root):
    mismatches, checked = [], 0
    for domain, splits in PUBLISHED_STATISTICS.items():
        for split in splits:
            path = Path(root) / domain / f"{split}_triplets.txt"
            code = cli_main(["stats", str(path), "--expect", f"{domain}/{split}"])
            checked += 1
            if code != 0:
                mismatches.append(f"{domain}/{split} (exit {code})")
    return not mismatches, f"{checked - len(mismatches)}/{checked} splits match the published table" + (
        f"; mismatched: {', '.join(mismatches)}" if mismatches else ""
    )


# --- 9. adversarial mechanism ---------------------------------------------------

def check_adversarial(eps=1e-6):
    gen = torch.Generator().manual_seed(4)
    worst_fwd, worst_bwd = 0.0, 0.0
    for scale in (0.5, 1.0, 2.0):
        x = torch.randn(7, dtype=torch.float64, generator=gen, requires_grad=True)
        w = torch.randn(7, dtype=torch.float64, generator=gen)
        out = gradient_reversal(x, scale)
        worst_fwd = max(worst_fwd, float((out - x).abs().max()))
        (torch.sin(out) * w).sum().backward()
        # the reversed gradient equals -scale times the finite-difference gradient of the plain function
        for i in range(7):
            xp, xm = x.detach().clone(), x.detach().clone()
            xp[i] += eps
            xm[i] -= eps
            numeric = float(((torch.sin(xp) - torch.sin(xm)) * w).sum()) / (2 * eps)
            want = -scale * numeric
            worst_bwd = max(worst_bwd, abs(x.grad[i].item() - want) / max(abs(want), 1e-12))
    sched = AdversarialSchedule(5)
    for _ in range(600):
        sched.next_phase()
    ratio_ok = sched.generator_steps == 500 and sched.discriminator_steps == 100
    ok = worst_fwd == 0.0 and worst_bwd <= 1e-4 and ratio_ok
    return ok, (
        f"forward max |diff| {worst_fwd:.1e} (= 0), backward rel. err {worst_bwd:.1e} (<= 1e-4), "
        f"schedule {sched.generator_steps}:{sched.discriminator_steps} over 600 steps (= 500:100)"
    )


# --- pytest entry points ------------------------------------------------------

def _assert(name, result):
    passed, detail = result
    assert _report(name, passed, detail), detail


def test_contrastive_loss_oracle():
    _assert("contrastive-loss oracle", check_contrastive_oracle())


def test_gradient_check():
    _assert("gradient check", check_gradient())


def test_aste_loss_oracle():
    _assert("aste_loss oracle", check_aste_oracle())


def test_f1_oracle():
    _assert("F1 oracle", check_f1_oracle())


def test_mmd_properties():
    _assert("MMD properties", check_mmd())


def test_overfit_sanity():
    _assert("overfit sanity", check_overfit())


@pytest.mark.slow
def test_direction_of_effect():
    _assert("direction of effect", check_direction())


def test_dataset_fidelity():
    root = os.environ.get("FOAL_ASTE_DATA")
    if not root:
        ACCEPTANCE_LINES.append("SKIP  dataset fidelity: FOAL_ASTE_DATA not set (public split files not supplied)")
        pytest.skip("FOAL_ASTE_DATA not set")
    _assert("dataset fidelity", check_dataset_fidelity(root))


def test_adversarial_mechanism():
    _assert("adversarial mechanism", check_adversarial())


if __name__ == "__main__":
    checks = [
        ("contrastive-loss oracle", check_contrastive_oracle),
        ("gradient check", check_gradient),
        ("aste_loss oracle", check_aste_oracle),
        ("F1 oracle", check_f1_oracle),
        ("MMD properties", check_mmd),
        ("overfit sanity", check_overfit),
        ("direction of effect", check_direction),
        ("adversarial mechanism", check_adversarial),
    ]
    root = os.environ.get("FOAL_ASTE_DATA")
    if root:
        checks.append(("dataset fidelity", lambda: check_dataset_fidelity(root)))
    results = [_report(name, *fn()) for name, fn in checks]
    if not root:
        print("SKIP  dataset fidelity: FOAL_ASTE_DATA not set (public split files not supplied)")
    sys.exit(0 if all(results) else 1)
