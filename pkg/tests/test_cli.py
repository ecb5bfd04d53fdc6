import io
import json

import numpy as np
import pytest

from kwtopics import cli
from kwtopics import corpus as cp
from kwtopics import trainer


def run_cli(argv):
    out = io.StringIO()
    code = cli.main(argv, out=out)
    return code, out.getvalue()


def write_raw(path, docs):
    with open(path, "w") as fh:
        for doc_id, week, tokens in docs:
            fh.write(json.dumps({"id": doc_id, "week": week, "tokens": tokens}) + "\n")


def write_lines(path, lines):
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


@pytest.fixture
def raw_inputs(tmp_path):
    raw = tmp_path / "raw.jsonl"
    write_raw(raw, [
        ("a", 1, ["horse", "race", "track"]),
        ("b", 1, ["game", "stream"]),
        ("c", 2, ["horse", "derby"]),
        ("d", 2, ["nothing", "here"]),
    ])
    kws = tmp_path / "kw.txt"
    write_lines(kws, ["horse", "game"])
    return raw, kws


def test_ingest_reports_sizes(raw_inputs, tmp_path):
    raw, kws = raw_inputs
    out_path = tmp_path / "c.jsonl"
    code, out = run_cli(["ingest", "--input", str(raw), "--keywords", str(kws),
                         "--out", str(out_path), "--no-normalize"])
    assert code == 0
    assert "V = " in out and "dropped = 1" in out
    cps = cp.load_corpus(out_path)
    assert cps.n_docs == 3


def test_ingest_unknown_keyword_exit_2(raw_inputs, tmp_path):
    raw, _ = raw_inputs
    kws = tmp_path / "bad.txt"
    write_lines(kws, ["zebra"])
    code, out = run_cli(["ingest", "--input", str(raw), "--keywords", str(kws),
                         "--out", str(tmp_path / "c.jsonl"), "--no-normalize"])
    assert code == 2
    assert "zebra" in out


def test_ingest_min_count_matches_oracle(tmp_path):
    rng = np.random.default_rng(0)
    weights = 1.0 / np.arange(1, 401) ** 1.1
    weights /= weights.sum()
    docs = []
    for i in range(200):
        toks = [f"t{t}" for t in rng.choice(400, size=20, p=weights)]
        docs.append((f"d{i}", 1, toks + ["kw"]))
    raw = tmp_path / "raw.jsonl"
    write_raw(raw, docs)
    kws = tmp_path / "kw.txt"
    write_lines(kws, ["kw"])
    out_path = tmp_path / "c.jsonl"
    code, out = run_cli(["ingest", "--input", str(raw), "--keywords", str(kws),
                         "--min-count", "10", "--out", str(out_path),
                         "--no-normalize"])
    assert code == 0
    from collections import Counter
    counts = Counter(t for _, _, toks in docs for t in toks)
    survivors = sum(1 for c in counts.values() if c >= 10)
    assert f"V = {survivors + 1}" in out


def test_synth_deterministic(tmp_path):
    args = ["synth", "--q", "2", "--k", "2", "--v", "30", "--docs", "40",
            "--words-per-doc", "8", "--seed", "7"]
    code, _ = run_cli(args + ["--out", str(tmp_path / "a.jsonl")])
    assert code == 0
    code, _ = run_cli(args + ["--out", str(tmp_path / "b.jsonl")])
    assert code == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_synth_sidecar_consistent(tmp_path):
    out_path = tmp_path / "c.jsonl"
    code, _ = run_cli(["synth", "--q", "2", "--k", "2", "--v", "30", "--docs",
                       "30", "--words-per-doc", "8", "--seed", "3",
                       "--out", str(out_path)])
    assert code == 0
    cps = cp.load_corpus(out_path)
    with np.load(str(out_path) + ".truth.npz") as z:
        z_kw = z["z_kw"]
        kw_ids = z["kw_ids"]
    for doc, z_row in zip(cps.documents, z_kw):
        flagged = set(kw_ids[z_row > 0.5].tolist())
        present = set(doc.word_ids.tolist()) & set(kw_ids.tolist())
        assert flagged == present


def test_synth_bad_sizes_exit_2(tmp_path):
    code, out = run_cli(["synth", "--q", "5", "--k", "2", "--v", "6", "--docs",
                         "10", "--words-per-doc", "8",
                         "--out", str(tmp_path / "c.jsonl")])
    assert code == 2


def _make_corpus_file(tmp_path, seed=0):
    out_path = tmp_path / "corpus.jsonl"
    code, _ = run_cli(["synth", "--q", "2", "--k", "2", "--v", "40", "--docs",
                       "120", "--words-per-doc", "10", "--seed", str(seed),
                       "--weeks", "4", "--out", str(out_path)])
    assert code == 0
    return out_path


def _fast_config(tmp_path, **extra):
    cfg_path = tmp_path / "train.cfg"
    lines = ["n_topics = 2", "batch_size = 16", "n_chains = 8",
             "e_step_rounds = 5", "n_partition_samples = 1000",
             "pretrain_iters = 15", "total_iters = 25", "elbo_every = 5",
             "seed = 1"]
    lines += [f"{k} = {v}" for k, v in extra.items()]
    write_lines(cfg_path, lines)
    return cfg_path


def test_train_modes_and_determinism(tmp_path):
    corpus_path = _make_corpus_file(tmp_path)
    cfg_path = _fast_config(tmp_path)

    pre_path = tmp_path / "pre.npz"
    code, out = run_cli(["train", "--corpus", str(corpus_path), "--config",
                         str(cfg_path), "--mode", "pretrain",
                         "--out", str(pre_path)])
    assert code == 0
    pre_state, _ = trainer.load_checkpoint(pre_path)
    assert np.array_equal(pre_state.energy.theta,
                          np.zeros_like(pre_state.energy.theta))

    full_a = tmp_path / "a.npz"
    full_b = tmp_path / "b.npz"
    code, _ = run_cli(["train", "--corpus", str(corpus_path), "--config",
                       str(cfg_path), "--pretrain-from", str(pre_path),
                       "--out", str(full_a)])
    assert code == 0
    code, _ = run_cli(["train", "--corpus", str(corpus_path), "--config",
                       str(cfg_path), "--pretrain-from", str(pre_path),
                       "--out", str(full_b)])
    assert code == 0
    ta = (tmp_path / "a.npz.trace.jsonl").read_bytes()
    tb = (tmp_path / "b.npz.trace.jsonl").read_bytes()
    assert ta == tb
    sa, _ = trainer.load_checkpoint(full_a)
    sb, _ = trainer.load_checkpoint(full_b)
    assert np.array_equal(sa.net.w2, sb.net.w2)
    assert np.array_equal(sa.eps, sb.eps)


def test_train_unknown_config_key_exit_2(tmp_path):
    corpus_path = _make_corpus_file(tmp_path)
    cfg_path = tmp_path / "bad.cfg"
    write_lines(cfg_path, ["nonsense_key = 3"])
    code, out = run_cli(["train", "--corpus", str(corpus_path), "--config",
                         str(cfg_path), "--out", str(tmp_path / "x.npz")])
    assert code == 2
    assert "nonsense_key" in out


def test_train_flag_overrides_config(tmp_path):
    corpus_path = _make_corpus_file(tmp_path)
    cfg_path = _fast_config(tmp_path)
    out_path = tmp_path / "m.npz"
    code, out = run_cli(["train", "--corpus", str(corpus_path), "--config",
                         str(cfg_path), "--iters", "12",
                         "--out", str(out_path)])
    assert code == 0
    assert "total_iters = 12" in out  # effective-config echo
    state, _ = trainer.load_checkpoint(out_path)
    assert state.iteration == 12


def test_recommend_nested_rankings_and_determinism(tmp_path):
    corpus_path = _make_corpus_file(tmp_path)
    cfg_path = _fast_config(tmp_path, total_iters=40)
    model_path = tmp_path / "m.npz"
    code, _ = run_cli(["train", "--corpus", str(corpus_path), "--config",
                       str(cfg_path), "--out", str(model_path)])
    assert code == 0
    outs = []
    for top_n in (2, 3, 2):
        code, out = run_cli(["recommend", "--model", str(model_path),
                             "--corpus", str(corpus_path), "--last-week", "4",
                             "--top-n", str(top_n), "--json-lines"])
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[2]  # deterministic
    rec2 = [json.loads(l) for l in outs[0].splitlines()]
    rec3 = [json.loads(l) for l in outs[1].splitlines()]
    for a, b in zip(rec2[:-1], rec3[:-1]):
        toks2 = [c["token"] for c in a["candidates"]]
        toks3 = [c["token"] for c in b["candidates"]]
        assert toks3[: len(toks2)] == toks2


def test_recommend_missing_week_exit_2(tmp_path):
    corpus_path = _make_corpus_file(tmp_path)
    cfg_path = _fast_config(tmp_path)
    model_path = tmp_path / "m.npz"
    run_cli(["train", "--corpus", str(corpus_path), "--config", str(cfg_path),
             "--out", str(model_path)])
    code, out = run_cli(["recommend", "--model", str(model_path), "--corpus",
                         str(corpus_path), "--last-week", "99"])
    assert code == 2
    assert "week" in out


def test_eval_pred_truth_scoring(tmp_path):
    pred = tmp_path / "pred.txt"
    truth = tmp_path / "truth.txt"
    write_lines(pred, ["racing", "kentucky"])
    write_lines(truth, ["racing", "sex"])
    code, out = run_cli(["eval", "--pred", str(pred), "--truth", str(truth)])
    assert code == 0
    assert "accuracy = 0.5000" in out
    write_lines(truth, ["racing", "kentucky"])
    code, out = run_cli(["eval", "--pred", str(pred), "--truth", str(truth),
                         "--json-lines"])
    rec = json.loads(out)
    assert rec["accuracy"] == 1.0 and rec["coverage"] == 1.0


def test_eval_uniform_model_scores_log_v(tmp_path):
    corpus_path = _make_corpus_file(tmp_path)
    cfg_path = _fast_config(tmp_path)
    model_path = tmp_path / "m.npz"
    run_cli(["train", "--corpus", str(corpus_path), "--config", str(cfg_path),
             "--out", str(model_path)])
    # zero the network: every topic row becomes uniform
    state, cfg = trainer.load_checkpoint(model_path)
    state.net.w1[:] = 0.0
    state.net.b1[:] = 0.0
    state.net.w2[:] = 0.0
    state.net.b2[:] = 0.0
    trainer.save_checkpoint(state, cfg, model_path)
    code, out = run_cli(["eval", "--model", str(model_path), "--corpus",
                         str(corpus_path), "--weeks", "4", "--json-lines"])
    assert code == 0
    rec = json.loads(out)
    assert rec["loglik"]["model"] == pytest.approx(-np.log(40), abs=1e-9)


def test_eval_trained_vs_lda_ordering(tmp_path):
    corpus_path = _make_corpus_file(tmp_path)
    cfg_path = _fast_config(tmp_path, total_iters=60, pretrain_iters=40)
    model_path = tmp_path / "m.npz"
    pre_path = tmp_path / "p.npz"
    run_cli(["train", "--corpus", str(corpus_path), "--config", str(cfg_path),
             "--mode", "pretrain", "--out", str(pre_path)])
    run_cli(["train", "--corpus", str(corpus_path), "--config", str(cfg_path),
             "--pretrain-from", str(pre_path), "--out", str(model_path)])
    code, out = run_cli(["eval", "--model", str(model_path), "--corpus",
                         str(corpus_path), "--weeks", "1-3", "--baseline",
                         "lda", "--json-lines"])
    assert code == 0
    rec = json.loads(out)
    assert "model" in rec["loglik"] and "lda" in rec["loglik"]
    assert rec["loglik"]["model"] > -np.log(40)  # better than uniform


def test_resume_matches_straight_run(tmp_path):
    corpus_path = _make_corpus_file(tmp_path)
    cfg_path = _fast_config(tmp_path, total_iters=30)
    straight = tmp_path / "s.npz"
    run_cli(["train", "--corpus", str(corpus_path), "--config", str(cfg_path),
             "--out", str(straight)])
    half = tmp_path / "h.npz"
    run_cli(["train", "--corpus", str(corpus_path), "--config", str(cfg_path),
             "--iters", "15", "--out", str(half)])
    resumed = tmp_path / "r.npz"
    code, _ = run_cli(["train", "--corpus", str(corpus_path),
                       "--resume-from", str(half), "--iters", "30",
                       "--out", str(resumed)])
    assert code == 0
    s1, _ = trainer.load_checkpoint(straight)
    s2, _ = trainer.load_checkpoint(resumed)
    assert np.max(np.abs(s1.net.w2 - s2.net.w2)) <= 1e-6
    assert np.max(np.abs(s1.eps - s2.eps)) <= 1e-6


def test_missing_input_file_exit_2(tmp_path):
    code, out = run_cli(["ingest", "--input", str(tmp_path / "nope.jsonl"),
                         "--keywords", str(tmp_path / "kw.txt"),
                         "--out", str(tmp_path / "c.jsonl")])
    assert code == 2


def test_numeric_failure_exit_3_with_rescue(tmp_path):
    corpus_path = _make_corpus_file(tmp_path)
    cfg_path = _fast_config(tmp_path, total_iters=10)
    half = tmp_path / "h.npz"
    code, _ = run_cli(["train", "--corpus", str(corpus_path), "--config",
                       str(cfg_path), "--iters", "5", "--out", str(half)])
    assert code == 0
    # poison the theta-regularizer target so the next step blows up
    state, cfg = trainer.load_checkpoint(half)
    state.kw_target = np.full_like(state.kw_target, np.nan)
    trainer.save_checkpoint(state, cfg, half)
    out_path = tmp_path / "full.npz"
    code, out = run_cli(["train", "--corpus", str(corpus_path),
                         "--resume-from", str(half), "--iters", "10",
                         "--out", str(out_path)])
    assert code == 3
    assert "numeric" in out
    rescue, _ = trainer.load_checkpoint(str(out_path) + ".rescue.npz")
    assert rescue.iteration == 5  # failing step rolled back


def test_config_env_var_default(tmp_path, monkeypatch):
    corpus_path = _make_corpus_file(tmp_path)
    cfg_path = _fast_config(tmp_path, total_iters=7)
    monkeypatch.setenv(cli.CONFIG_ENV_VAR, str(cfg_path))
    out_path = tmp_path / "m.npz"
    code, out = run_cli(["train", "--corpus", str(corpus_path),
                         "--out", str(out_path)])
    assert code == 0
    assert "total_iters = 7" in out


def test_eval_vocab_mismatch_exit_2(tmp_path):
    corpus_a = _make_corpus_file(tmp_path, seed=0)
    cfg_path = _fast_config(tmp_path)
    model_path = tmp_path / "m.npz"
    run_cli(["train", "--corpus", str(corpus_a), "--config", str(cfg_path),
             "--out", str(model_path)])
    other = tmp_path / "other.jsonl"
    code, _ = run_cli(["synth", "--q", "2", "--k", "2", "--v", "80", "--docs",
                       "50", "--words-per-doc", "8", "--seed", "1",
                       "--out", str(other)])
    assert code == 0
    code, out = run_cli(["eval", "--model", str(model_path), "--corpus",
                         str(other), "--weeks", "1"])
    assert code == 2
    assert "mismatch" in out
