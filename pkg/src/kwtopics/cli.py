"""Command-line surface: ingest -> train -> recommend -> eval, plus synth.

Configuration is a flat `key = value` text file (# comments); command-line
flags override file values, and every run echoes its effective
configuration so it can be reproduced byte for byte.

Exit codes: 0 success, 2 input/config error, 3 numeric failure.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import corpus as corpus_mod
from . import evaluation, recommend, synth, trainer
from .mathcore import RngStream

CONFIG_ENV_VAR = "KWTOPICS_CONFIG"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class CliError(ValueError):
    pass


_TRAIN_FIELDS = {f.name: f.type for f in dataclasses.fields(trainer.TrainConfig)}
_INFER_FIELDS = {f.name: f.type for f in dataclasses.fields(recommend.InferenceConfig)}


def _coerce(name, raw, target):
    raw = raw.strip()
    try:
        if target is bool or target == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if target is int or target == "int":
            return int(raw)
        if target is float or target == "float":
            if raw.lower() == "none":
                return None
            return float(raw)
        return raw
    except ValueError as exc:
        raise CliError(f"config key {name!r}: cannot parse value {raw!r}") from exc


def parse_config_file(path):
    """Flat key = value lines; unknown keys are rejected."""
    train_kwargs = {}
    infer_kwargs = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise CliError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key in _TRAIN_FIELDS:
                train_kwargs[key] = _coerce(key, raw, _TRAIN_FIELDS[key])
            elif key in _INFER_FIELDS:
                infer_kwargs[key] = _coerce(key, raw, _INFER_FIELDS[key])
            else:
                raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
    return train_kwargs, infer_kwargs


def load_configs(path, train_overrides=None, infer_overrides=None):
    train_kwargs, infer_kwargs = ({}, {})
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path:
        train_kwargs, infer_kwargs = parse_config_file(path)
    train_kwargs.update({k: v for k, v in (train_overrides or {}).items()
                         if v is not None})
    infer_kwargs.update({k: v for k, v in (infer_overrides or {}).items()
                         if v is not None})
    try:
        cfg = trainer.TrainConfig(**train_kwargs)
        cfg.validate()
        icfg = recommend.InferenceConfig(**infer_kwargs)
        icfg.validate()
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    return cfg, icfg


def echo_config(cfg, out):
    for f in dataclasses.fields(cfg):
        out.write(f"{f.name} = {getattr(cfg, f.name)}\n")


def cmd_ingest(args, out):
    raw = corpus_mod.read_raw_documents(args.input)
    if args.normalize:
        for rd in raw:
            rd.tokens = corpus_mod.normalize_tokens(rd.tokens)
    keywords = corpus_mod.read_keyword_file(args.keywords)
    if args.normalize:
        keywords = corpus_mod.normalize_tokens(keywords)
    vocab = corpus_mod.build_vocabulary((rd.tokens for rd in raw),
                                        min_count=args.min_count)
    cps, dropped = corpus_mod.encode_corpus(
        raw, vocab, keywords, keep_keywordless=args.keep_keywordless)
    corpus_mod.save_corpus(cps, args.out)
    out.write(f"V = {vocab.size}\nD = {cps.n_docs}\nQ = {cps.n_keywords}\n"
              f"dropped = {dropped}\n")
    return EXIT_OK


def cmd_synth(args, out):
    if min(args.q, args.k, args.v, args.docs, args.words_per_doc) < 1:
        raise CliError("sizes must be positive")
    if args.v < 2 * args.q + args.k:
        raise CliError("vocabulary too small for the planted structure")
    gt = planted_ground_truth(args.q, args.k, args.v, args.docs,
                              args.words_per_doc, penalty=args.penalty,
                              n_weeks=args.weeks)
    rng = RngStream(args.seed, 100)
    cps, draws = synth.generate_corpus(gt, rng)
    corpus_mod.save_corpus(cps, args.out)
    sidecar = args.out + ".truth.npz"
    np.savez(
        sidecar,
        theta=gt.theta,
        penalty=np.float64(gt.penalty),
        f_true=gt.f_true,
        kw_ids=gt.kw_ids,
        patterns=np.stack([np.array(k, dtype=float)
                           for k in sorted(gt.pattern_table)]),
        pattern_betas=np.stack([gt.pattern_table[k]
                                for k in sorted(gt.pattern_table)]),
        z_kw=np.stack([d.z_kw for d in draws]),
        eta=np.stack([d.eta for d in draws]),
    )
    out.write(f"V = {cps.vocabulary.size}\nD = {cps.n_docs}\n"
              f"Q = {cps.n_keywords}\nsidecar = {sidecar}\n")
    return EXIT_OK


def planted_ground_truth(n_keywords, n_topics, vocab_size, n_docs,
                         words_per_doc, penalty=2.0, n_weeks=10):
    """Disjoint word blocks per keyword; a keyword set induces the uniform
    distribution over the union of its blocks (all topic rows equal)."""
    usable = vocab_size - 1 - n_keywords  # placeholder + keyword tokens reserved
    block = usable // n_keywords
    if block < 1:
        raise CliError("vocabulary too small for the planted structure")
    kw_ids = np.arange(n_keywords, dtype=np.int64)
    blocks = [np.arange(n_keywords + j * block, n_keywords + (j + 1) * block)
              for j in range(n_keywords)]
    table = {}
    for code in range(1, 2 ** n_keywords):
        pattern = tuple((code >> j) & 1 for j in range(n_keywords))
        support = np.concatenate([blocks[j] for j in range(n_keywords)
                                  if pattern[j]])
        row = np.zeros(vocab_size)
        row[support] = 1.0 / len(support)
        table[pattern] = np.tile(row, (n_topics, 1))
    return synth.GroundTruth(
        theta=np.zeros(n_keywords), penalty=penalty,
        f_true=np.ones(n_topics), words_per_doc=words_per_doc,
        n_docs=n_docs, vocab_size=vocab_size, kw_ids=kw_ids,
        pattern_table=table, n_weeks=n_weeks)


def cmd_train(args, out):
    overrides = {"seed": args.seed, "total_iters": args.iters}
    cfg, _ = load_configs(args.config, train_overrides=overrides)
    cps = corpus_mod.load_corpus(args.corpus)
    echo_config(cfg, out)
    trace_path = args.trace or (args.out + ".trace.jsonl")
    if args.mode == "pretrain":
        state = trainer.pretrain(cps, cfg)
        trace = []
    else:
        init = None
        if args.pretrain_from:
            pre, _pre_cfg = trainer.load_checkpoint(args.pretrain_from)
            trainer.validate_state_for_corpus(pre, cps)
            init = trainer.warm_start_from(trainer.init_state(cps, cfg), pre)
        elif args.resume_from:
            init, cfg = trainer.load_checkpoint(args.resume_from)
            if args.iters is not None:
                cfg = dataclasses.replace(cfg, total_iters=args.iters)
            trainer.validate_state_for_corpus(init, cps, require_docs=True)
        state, trace = trainer.train(cps, cfg, init=init,
                                     rescue_path=args.out + ".rescue.npz")
    trainer.save_checkpoint(state, cfg, args.out)
    with open(trace_path, "w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps(rec) + "\n")
    out.write(f"checkpoint = {args.out}\ntrace = {trace_path}\n"
              f"iterations = {state.iteration}\n")
    return EXIT_OK


def cmd_recommend(args, out):
    cfg, icfg = load_configs(args.config,
                             infer_overrides={"top_n": args.top_n})
    state, _ = trainer.load_checkpoint(args.model)
    cps = corpus_mod.load_corpus(args.corpus)
    trainer.validate_state_for_corpus(state, cps)
    window = cps.week_slice(args.last_week)
    if not window:
        raise CliError(f"no documents in week {args.last_week}")
    if args.q_last:
        tokens = corpus_mod.read_keyword_file(args.q_last)
        kw_tokens = cps.keyword_tokens()
        missing = [t for t in tokens if t not in kw_tokens]
        if missing:
            raise CliError(f"not candidate keywords: {missing}")
        query = [kw_tokens.index(t) for t in tokens]
    else:
        present = set()
        for d in window:
            present.update(np.flatnonzero(corpus_mod.keyword_mask(d, cps)).tolist())
        query = sorted(present)
    if not query:
        raise CliError(f"week {args.last_week} contains no candidate keywords")
    report = recommend.recommend_keywords(state, cps, query, window, icfg)
    _write_recommend_report(report, args, out)
    return EXIT_OK


def _write_recommend_report(report, args, out):
    lines = []
    if args.json_lines:
        for token, cands in report.per_keyword.items():
            lines.append(json.dumps({
                "query": token,
                "candidates": [{"token": c.token, "kl": c.kl, "distance":
                                c.distance, "freq": c.freq} for c in cands],
            }))
        lines.append(json.dumps({"next_keywords": report.next_keywords,
                                 "fallback": report.fallback}))
    else:
        for token, cands in report.per_keyword.items():
            lines.append(f"query {token}:")
            for c in cands:
                lines.append(f"  {c.token}  kl={c.kl:.6f}  R={c.distance:g}  "
                             f"freq={c.freq:.4f}")
        lines.append("next_keywords: " + " ".join(report.next_keywords))
        lines.append(f"fallback: {report.fallback}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    out.write(text)


def _parse_weeks(expr):
    weeks = set()
    for part in expr.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            weeks.update(range(int(lo), int(hi) + 1))
        elif part:
            weeks.add(int(part))
    if not weeks:
        raise CliError(f"cannot parse week selection {expr!r}")
    return weeks


def cmd_eval(args, out):
    report = evaluation.EvalReport()
    cps = corpus_mod.load_corpus(args.corpus) if args.corpus else None
    if args.model:
        if cps is None:
            raise CliError("--model requires --corpus")
        state, cfg = trainer.load_checkpoint(args.model)
        trainer.validate_state_for_corpus(state, cps)
        docs = cps.week_slice(_parse_weeks(args.weeks)) if args.weeks else cps.documents
        if not docs:
            raise CliError(f"no documents in weeks {args.weeks}")
        report.loglik["model"] = evaluation.avg_word_loglik(
            state, docs, keyword_threshold=cfg.keyword_threshold, corpus=cps)
        if args.baseline == "lda":
            beta = evaluation.lda_baseline(docs, cfg.n_topics, args.lda_iters,
                                           RngStream(args.seed, 200))
            report.loglik["lda"] = evaluation.avg_word_loglik(beta, docs)
        report.meta["weeks"] = args.weeks or "all"
    if args.truth or args.pred:
        if not (args.truth and args.pred):
            raise CliError("accuracy scoring needs both --pred and --truth")
        pred = corpus_mod.read_keyword_file(args.pred)
        truth = corpus_mod.read_keyword_file(args.truth)
        report.accuracy, report.coverage = recommend.score_recommendations(
            pred, truth)
    if args.json_lines:
        out.write(json.dumps({
            "loglik": report.loglik, "accuracy": report.accuracy,
            "coverage": report.coverage, "meta": report.meta}) + "\n")
    else:
        for label, value in report.loglik.items():
            out.write(f"loglik[{label}] = {value:.6f}\n")
        if report.accuracy is not None:
            out.write(f"accuracy = {report.accuracy:.4f}\n")
            cov = "none" if report.coverage is None else f"{report.coverage:.4f}"
            out.write(f"coverage = {cov}\n")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="kwtopics",
                                description="keyword-conditioned topic modeling")
    p.add_argument("--threads", type=int, default=0,
                   help="0 = sequential deterministic mode (default)")
    sub = p.add_subparsers(dest="command", required=True)

    pi = sub.add_parser("ingest", help="encode raw token lists into a corpus file")
    pi.add_argument("--input", required=True)
    pi.add_argument("--keywords", required=True)
    pi.add_argument("--min-count", type=int, default=1, dest="min_count")
    pi.add_argument("--out", required=True)
    pi.add_argument("--keep-keywordless", action="store_true")
    pi.add_argument("--no-normalize", dest="normalize", action="store_false")
    pi.set_defaults(func=cmd_ingest)

    ps = sub.add_parser("synth", help="generate a planted synthetic corpus")
    ps.add_argument("--q", type=int, required=True)
    ps.add_argument("--k", type=int, required=True)
    ps.add_argument("--v", type=int, required=True)
    ps.add_argument("--docs", type=int, required=True)
    ps.add_argument("--words-per-doc", type=int, required=True, dest="words_per_doc")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--weeks", type=int, default=10)
    ps.add_argument("--penalty", type=float, default=2.0)
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_synth)

    pt = sub.add_parser("train", help="pretrain or train a model")
    pt.add_argument("--corpus", required=True)
    pt.add_argument("--config")
    pt.add_argument("--out", required=True)
    pt.add_argument("--mode", choices=("pretrain", "full"), default="full")
    pt.add_argument("--pretrain-from", dest="pretrain_from")
    pt.add_argument("--resume-from", dest="resume_from")
    pt.add_argument("--iters", type=int)
    pt.add_argument("--seed", type=int)
    pt.add_argument("--trace")
    pt.set_defaults(func=cmd_train)

    pr = sub.add_parser("recommend", help="recommend next-period keywords")
    pr.add_argument("--model", required=True)
    pr.add_argument("--corpus", required=True)
    pr.add_argument("--last-week", type=int, required=True, dest="last_week")
    pr.add_argument("--top-n", type=int, dest="top_n")
    pr.add_argument("--q-last", dest="q_last")
    pr.add_argument("--config")
    pr.add_argument("--out")
    pr.add_argument("--json-lines", action="store_true", dest="json_lines")
    pr.set_defaults(func=cmd_recommend)

    pe = sub.add_parser("eval", help="held-out scoring and recommendation accuracy")
    pe.add_argument("--model")
    pe.add_argument("--corpus")
    pe.add_argument("--weeks")
    pe.add_argument("--baseline", choices=("lda", "none"), default="none")
    pe.add_argument("--lda-iters", type=int, default=30, dest="lda_iters")
    pe.add_argument("--truth")
    pe.add_argument("--pred")
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--json-lines", action="store_true", dest="json_lines")
    pe.set_defaults(func=cmd_eval)
    return p


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args, out)
    except trainer.NumericError as exc:
        out.write(f"error: numeric failure: {exc}\n")
        return EXIT_NUMERIC
    except (CliError, ValueError, OSError, KeyError) as exc:
        out.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
