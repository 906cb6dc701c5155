"""Command-line interface for corpus handling, training, generation, and metrics.

Metric commands tokenize inputs with the rule-based tokenizer (lowercased by
default), so BLEU and WER treat casing differences as matches.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from pathlib import Path

import click

from . import __version__
from .adversarial import GanConfig, export_curves as export_gan_curves, save_gan, train_adversarial
from .config import ConfigError, load_config
from .corpus import compute_stats, ingest as ingest_file, split_corpus, write_jsonl
from .llm import (GenerationRequest, HttpProvider, MockProvider, generate_batch,
                  parse_transcript_response)
from .metrics import CorruptionRates, bleu as bleu_score, corpus_bleu, corrupt_transcript, wer as wer_score
from .mixture import export_curves as export_mixture_curves, fit_em, save_mixture
from .ngram import SamplerConfig, load_ngram, sample_sequence, save_ngram, score_perplexity, train_ngram
from .pipeline import run_pipeline
from .preprocess import PreprocessConfig, build_vocabulary, clean_corpus, tokenize
from .review import ReviewRecord, ReviewStore, summarize_reviews
from .templates import (DEFAULT_FEWSHOT_INSTRUCTION, build_fewshot_prompt,
                        default_fewshot_examples, default_lexicon, default_template,
                        fill_template, load_lexicon, parse_template, scenario_prompts)


def _echo_json(payload, path: str | None) -> None:
    text = json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        click.echo(text)


def _read_texts(path: str, split: str | None = None) -> list[tuple[str, str]]:
    """(id, text) pairs from a notes.jsonl file or a plain one-doc-per-line file."""
    p = Path(path)
    pairs = []
    if p.suffix == ".jsonl":
        with open(p, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                record = json.loads(line)
                if split and record.get("split") != split:
                    continue
                pairs.append((str(record.get("id", lineno)), record["text"]))
    else:
        with open(p, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if line.strip():
                    pairs.append((str(lineno), line.rstrip("\n")))
    return pairs


def _token_sequences(path: str, config: PreprocessConfig, split: str | None = None):
    pairs = _read_texts(path, split)
    return [(note_id, tokenize(text, config)) for note_id, text in pairs]


def _parse_column_map(text: str | None) -> dict | None:
    if not text:
        return None
    mapping = {}
    for part in text.split(","):
        column, _, fieldname = part.partition("=")
        if not column or not fieldname:
            raise click.BadParameter("expected COLUMN=field pairs separated by commas")
        mapping[column.strip()] = fieldname.strip()
    return mapping


@click.group()
@click.version_option(version=__version__)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Pipeline config file (JSON).")
@click.option("--seed", type=int, default=None, help="Global seed override.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None,
              help="Run output directory override.")
@click.pass_context
def main(ctx, config_path, seed, out_dir):
    """Synthetic clinical transcript generation and evaluation toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["seed"] = seed
    ctx.obj["out_dir"] = out_dir


def _seed_or(ctx, fallback: int) -> int:
    seed = ctx.obj.get("seed") if ctx.obj else None
    return fallback if seed is None else seed


@main.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "format_", type=click.Choice(["jsonl", "csv"]), default="jsonl")
@click.option("--column-map", default=None,
              help="CSV column mapping, e.g. ROW_ID=id,CATEGORY=category,TEXT=text")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def ingest(input_path, format_, column_map, out):
    """Read a record file and write a normalized notes.jsonl corpus."""
    corpus = ingest_file(input_path, format=format_, column_map=_parse_column_map(column_map))
    write_jsonl(corpus, out)
    click.echo(f"ingested {len(corpus)} notes -> {out}")


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--bucket-width", type=int, default=50)
@click.option("--json-out", type=click.Path(dir_okay=False), default=None)
@click.option("--csv-out", type=click.Path(dir_okay=False), default=None,
              help="Optional histogram CSV.")
def stats(corpus_path, bucket_width, json_out, csv_out):
    """Corpus statistics: category counts, length mean/std-dev, histogram."""
    corpus = ingest_file(corpus_path, format="jsonl")
    result = compute_stats(corpus, bucket_width=bucket_width)
    _echo_json(result.as_dict(), json_out)
    if csv_out:
        with open(csv_out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lo", "hi", "count"])
            for lo, hi, count in result.histogram:
                writer.writerow([lo, hi, count])


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--ratios", default="0.8,0.1,0.1", show_default=True,
              help="train,validation,test fractions")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.pass_context
def split(ctx, corpus_path, ratios, seed, out):
    """Assign train/validation/test splits with a seeded shuffle."""
    parts = tuple(float(x) for x in ratios.split(","))
    corpus = ingest_file(corpus_path, format="jsonl")
    result = split_corpus(corpus, parts, _seed_or(ctx, seed))
    write_jsonl(result, out)
    sizes = {s: len(result.by_split(s)) for s in ("train", "validation", "test")}
    click.echo(f"split sizes: {sizes}")


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--rejects-out", type=click.Path(dir_okay=False), default=None)
@click.option("--lowercase/--no-lowercase", default=True, show_default=True)
@click.option("--preserve-deid/--no-preserve-deid", default=True, show_default=True)
def preprocess(corpus_path, out, rejects_out, lowercase, preserve_deid):
    """Clean notes: normalize punctuation, strip controls, collapse whitespace."""
    config = PreprocessConfig(lowercase=lowercase, preserve_deid_markers=preserve_deid)
    corpus = ingest_file(corpus_path, format="jsonl")
    cleaned, rejections = clean_corpus(corpus, config)
    write_jsonl(cleaned, out)
    if rejects_out:
        _echo_json([{"id": i, "reason": r} for i, r in rejections], rejects_out)
    click.echo(f"kept {len(cleaned)} notes, rejected {len(rejections)}")


@main.command("train-lm")
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", "split_", default=None, help="Restrict to one split.")
@click.option("--order", type=int, default=2, show_default=True)
@click.option("--alpha", type=float, default=0.01, show_default=True)
@click.option("--min-token-count", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def train_lm(corpus_path, split_, order, alpha, min_token_count, out):
    """Train an additively smoothed n-gram language model."""
    config = PreprocessConfig(min_token_count=min_token_count)
    sequences = [tokens for _, tokens in _token_sequences(corpus_path, config, split_)]
    vocabulary = build_vocabulary(sequences, config)
    model = train_ngram(sequences, order, alpha, vocabulary)
    save_ngram(model, out)
    click.echo(f"trained order-{order} model over {len(vocabulary)} tokens -> {out}")


@main.command()
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("texts_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", "split_", default=None)
@click.option("--json-out", type=click.Path(dir_okay=False), default=None)
def perplexity(model_path, texts_path, split_, json_out):
    """Score text perplexity under a trained model (end token included)."""
    model = load_ngram(model_path)
    sequences = [t for _, t in _token_sequences(texts_path, PreprocessConfig(), split_) if t]
    value = score_perplexity(model, sequences)
    _echo_json({"perplexity": value, "sequences": len(sequences)}, json_out)


@main.command()
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--count", type=int, default=10, show_default=True)
@click.option("--temperature", type=float, default=1.0, show_default=True)
@click.option("--top-k", default="all", show_default=True)
@click.option("--top-p", type=float, default=None)
@click.option("--max-length", type=int, default=60, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def sample(ctx, model_path, count, temperature, top_k, top_p, max_length, seed, out):
    """Sample sequences with temperature scaling and top-k/top-p truncation."""
    model = load_ngram(model_path)
    top_k_value = top_k if top_k == "all" else int(top_k)
    base_seed = _seed_or(ctx, seed)
    records = []
    for i in range(count):
        config = SamplerConfig(temperature=temperature, top_k=top_k_value, top_p=top_p,
                               max_length=max_length, seed=base_seed + i)
        tokens = sample_sequence(model, config)
        records.append({"id": f"sample-{i:04d}", "provenance": "ngram",
                        "text": " ".join(tokens)})
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
    else:
        for record in records:
            click.echo(record["text"])


@main.command()
@click.argument("candidates_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("references_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--max-order", type=int, default=4, show_default=True)
@click.option("--smooth", is_flag=True, help="Add-one smoothing for orders >= 2.")
@click.option("--max-references", type=int, default=None,
              help="Cap on references per candidate.")
@click.option("--json-out", type=click.Path(dir_okay=False), default=None)
@click.option("--csv-out", type=click.Path(dir_okay=False), default=None)
def bleu(candidates_path, references_path, max_order, smooth, max_references, json_out, csv_out):
    """Corpus BLEU of candidates against shared references (micro + macro)."""
    config = PreprocessConfig()
    candidates = [(i, t) for i, t in _token_sequences(candidates_path, config) if t]
    references = [t for _, t in _token_sequences(references_path, config) if t]
    if max_references:
        references = references[:max_references]
    pairs = [(tokens, references) for _, tokens in candidates]
    report = corpus_bleu(pairs, max_order=max_order, smooth=smooth)
    _echo_json(report.as_dict(), json_out)
    if csv_out:
        with open(csv_out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "bleu", "brevity_penalty"])
            for (note_id, tokens) in candidates:
                single = bleu_score(tokens, references, max_order, smooth=smooth)
                writer.writerow([note_id, repr(single.bleu), repr(single.brevity_penalty)])


@main.command()
@click.argument("references_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("hypotheses_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--json-out", type=click.Path(dir_okay=False), default=None)
@click.option("--csv-out", type=click.Path(dir_okay=False), default=None)
def wer(references_path, hypotheses_path, json_out, csv_out):
    """Word error rate of hypothesis i against reference i, plus the corpus rate."""
    config = PreprocessConfig()
    references = _token_sequences(references_path, config)
    hypotheses = _token_sequences(hypotheses_path, config)
    if len(references) != len(hypotheses):
        raise click.ClickException(
            f"got {len(references)} references but {len(hypotheses)} hypotheses"
        )
    rows = []
    edits = 0
    total_length = 0
    for (ref_id, ref), (_, hyp) in zip(references, hypotheses):
        report = wer_score(ref, hyp)
        rows.append((ref_id, report))
        edits += report.edits
        total_length += report.reference_length
    payload = {
        "corpus_wer": edits / total_length if total_length else None,
        "pairs": len(rows),
        "per_pair": {ref_id: report.as_dict() for ref_id, report in rows},
    }
    _echo_json(payload, json_out)
    if csv_out:
        with open(csv_out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "wer", "substitutions", "deletions", "insertions"])
            for ref_id, report in rows:
                writer.writerow([ref_id, repr(report.wer), report.substitutions,
                                 report.deletions, report.insertions])


@main.command()
@click.argument("texts_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--sub", type=float, default=0.1, show_default=True)
@click.option("--delete", "delete_", type=float, default=0.0, show_default=True)
@click.option("--insert", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.pass_context
def corrupt(ctx, texts_path, sub, delete_, insert, seed, out):
    """Push texts through the substitution/deletion/insertion noise channel."""
    config = PreprocessConfig()
    sequences = [(i, t) for i, t in _token_sequences(texts_path, config) if t]
    vocabulary = build_vocabulary([t for _, t in sequences], config)
    rates = CorruptionRates(substitution=sub, deletion=delete_, insertion=insert)
    base_seed = _seed_or(ctx, seed)
    with open(out, "w", encoding="utf-8") as fh:
        for i, (note_id, tokens) in enumerate(sequences):
            noisy = corrupt_transcript(tokens, rates, vocabulary, seed=base_seed + i)
            fh.write(json.dumps({"id": note_id, "text": " ".join(noisy)},
                                sort_keys=True, ensure_ascii=False) + "\n")
    click.echo(f"corrupted {len(sequences)} texts -> {out}")


@main.command("template-gen")
@click.option("--template", "template_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Template file; defaults to the shipped clinical template.")
@click.option("--lexicon", "lexicon_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Slot lexicon JSON; defaults to the shipped lexicon.")
@click.option("--count", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.pass_context
def template_gen(ctx, template_path, lexicon_path, count, seed, out):
    """Generate synthetic notes by filling template placeholders from a lexicon."""
    if template_path:
        template = parse_template(Path(template_path).read_text("utf-8"),
                                  name=Path(template_path).stem)
    else:
        template = default_template()
    lexicon = load_lexicon(lexicon_path) if lexicon_path else default_lexicon()
    base_seed = _seed_or(ctx, seed)
    with open(out, "w", encoding="utf-8") as fh:
        for i in range(count):
            text = fill_template(template, lexicon, base_seed + i)
            fh.write(json.dumps({"id": f"template-{i:04d}", "provenance": "template",
                                 "text": text}, sort_keys=True, ensure_ascii=False) + "\n")
    click.echo(f"filled {count} templates -> {out}")


@main.command("prompt-build")
@click.option("--scenario", default=None,
              help="Shipped scenario instruction (see --list-scenarios).")
@click.option("--list-scenarios", is_flag=True)
@click.option("--instruction", default=None, help="Literal instruction text.")
@click.option("--condition", default="", help="Condition substituted into the instruction.")
@click.option("--examples", "examples_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON list of example transcripts.")
@click.option("--n-examples", type=int, default=2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def prompt_build(ctx, scenario, list_scenarios, instruction, condition, examples_path,
                 n_examples, seed, out):
    """Assemble a few-shot prompt bundle ({prompt, scenario, seed} JSONL)."""
    prompts = scenario_prompts()
    if list_scenarios:
        for name in prompts:
            click.echo(name)
        return
    if scenario:
        if scenario not in prompts:
            raise click.ClickException(
                f"unknown scenario {scenario!r}; choose from {', '.join(prompts)}")
        instruction_text = prompts[scenario]
        tag = scenario
    else:
        instruction_text = instruction or DEFAULT_FEWSHOT_INSTRUCTION
        tag = condition or "default"
    if examples_path:
        examples = json.loads(Path(examples_path).read_text("utf-8"))
    else:
        examples = list(default_fewshot_examples())
    prompt = build_fewshot_prompt(instruction_text, examples[:n_examples], condition)
    record = {"prompt": prompt, "scenario": tag, "seed": _seed_or(ctx, seed)}
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
    else:
        click.echo(prompt)


@main.command("llm-gen")
@click.argument("prompts_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--provider", type=click.Choice(["mock", "http"]), default="mock",
              show_default=True)
@click.option("--endpoint", default="", help="HTTP provider endpoint URL.")
@click.option("--auth-token", default="", envvar="CLINSYNTH_API_TOKEN",
              help="Bearer token for the HTTP provider (env: CLINSYNTH_API_TOKEN).")
@click.option("--model", default="default", show_default=True)
@click.option("--temperature", type=float, default=0.7, show_default=True)
@click.option("--max-tokens", type=int, default=512, show_default=True)
@click.option("--max-retries", type=int, default=2, show_default=True)
@click.option("--max-inflight", type=int, default=4, show_default=True)
@click.option("--fixtures-dir", type=click.Path(file_okay=False), default=None,
              help="Canned completions for the mock provider.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--errors-out", type=click.Path(dir_okay=False), default=None)
def llm_gen(prompts_path, provider, endpoint, auth_token, model, temperature,
            max_tokens, max_retries, max_inflight, fixtures_dir, out, errors_out):
    """Send a prompt bundle through a provider and parse transcript completions."""
    if provider == "http":
        if not endpoint:
            raise click.ClickException("--provider http requires --endpoint")
        provider_obj = HttpProvider(endpoint=endpoint, auth_token=auth_token)
    else:
        provider_obj = MockProvider(fixtures_dir=fixtures_dir)
    requests = []
    with open(prompts_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            record = json.loads(line)
            requests.append(GenerationRequest(
                request_id=str(record.get("id", f"prompt-{lineno:04d}")),
                prompt=record["prompt"],
                model=model,
                temperature=temperature,
                max_tokens=max_tokens,
            ))
    scenario_by_id = {}
    with open(prompts_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if line.strip():
                record = json.loads(line)
                scenario_by_id[str(record.get("id", f"prompt-{lineno:04d}"))] = record.get("scenario", "")
    responses, errors = generate_batch(requests, provider_obj,
                                       max_retries=max_retries, max_inflight=max_inflight)
    written = 0
    failures = [{"request_id": e.request_id, "message": e.message, "attempts": e.attempts}
                for e in errors]
    with open(out, "w", encoding="utf-8") as fh:
        for response in responses:
            try:
                record = parse_transcript_response(
                    response.completion, scenario=scenario_by_id.get(response.request_id, ""))
            except ValueError as exc:
                failures.append({"request_id": response.request_id, "message": str(exc),
                                 "attempts": response.attempts})
                continue
            fh.write(json.dumps(record.as_dict(), sort_keys=True, ensure_ascii=False) + "\n")
            written += 1
    if errors_out:
        _echo_json(failures, errors_out)
    click.echo(f"wrote {written} transcripts ({len(failures)} failures) -> {out}")


@main.command("gan-train")
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", "split_", default=None)
@click.option("--epochs", type=int, default=30, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--g-lr", type=float, default=0.15, show_default=True)
@click.option("--d-lr", type=float, default=0.5, show_default=True)
@click.option("--max-length", type=int, default=16, show_default=True)
@click.option("--max-sequences", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--curves-out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def gan_train(ctx, corpus_path, split_, epochs, batch_size, g_lr, d_lr, max_length,
              max_sequences, seed, out, curves_out):
    """Adversarially train the categorical sequence generator."""
    sequences = [t for _, t in _token_sequences(corpus_path, PreprocessConfig(), split_) if t]
    if max_sequences:
        sequences = sequences[:max_sequences]
    sequences = [s[:max_length] for s in sequences]
    config = GanConfig(epochs=epochs, batch_size=batch_size, g_learning_rate=g_lr,
                       d_learning_rate=d_lr, max_length=max_length,
                       seed=_seed_or(ctx, seed))
    state = train_adversarial(sequences, config)
    save_gan(state, out)
    if curves_out:
        export_gan_curves(state, curves_out)
    final = state.nll_rewards[-1] if state.nll_rewards else float("nan")
    click.echo(f"trained {epochs} epochs, final NLL reward {final:.4f} -> {out}")


@main.command("em-train")
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", "split_", default=None)
@click.option("--k", type=int, default=3, show_default=True)
@click.option("--alpha", type=float, default=0.01, show_default=True)
@click.option("--iterations", type=int, default=30, show_default=True)
@click.option("--order", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--curves-out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def em_train(ctx, corpus_path, split_, k, alpha, iterations, order, seed, out, curves_out):
    """Fit the latent-mixture document model by EM, logging the lower bound."""
    documents = [t for _, t in _token_sequences(corpus_path, PreprocessConfig(), split_) if t]
    model = fit_em(documents, k=k, alpha=alpha, iterations=iterations,
                   seed=_seed_or(ctx, seed), order=order)
    save_mixture(model, out)
    if curves_out:
        export_mixture_curves(model, curves_out)
    final = model.lower_bound_curve[-1] if model.lower_bound_curve else float("nan")
    click.echo(f"EM finished, final lower bound {final:.4f} -> {out}")


@main.command()
@click.argument("transcripts_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--reviewer", required=True, help="Reviewer id for the records.")
@click.option("--scores-file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Prepared JSONL of {note_id, coherence, clinical_relevance, "
                   "format_adherence, comments}.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def review(transcripts_path, reviewer, scores_file, out):
    """Record criterion scores for transcripts, from a file or standard input.

    Without --scores-file each transcript is printed and three 1-5 scores
    (coherence, clinical relevance, format adherence) are read per line from
    standard input, optionally followed by a comment.
    """
    notes = _read_texts(transcripts_path)
    store = ReviewStore(note_ids=[i for i, _ in notes], path=out)
    timestamp = time.strftime("%Y-%m-%dT%H:%M:%S")
    if scores_file:
        with open(scores_file, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                store.record_review(ReviewRecord(
                    note_id=str(record["note_id"]),
                    reviewer_id=reviewer,
                    coherence=record["coherence"],
                    clinical_relevance=record["clinical_relevance"],
                    format_adherence=record["format_adherence"],
                    comments=record.get("comments", ""),
                    timestamp=timestamp,
                ))
    else:
        click.echo("enter: coherence clinical_relevance format_adherence [comment]")
        for note_id, text in notes:
            click.echo(f"\n--- note {note_id} ---\n{text}\n")
            line = sys.stdin.readline()
            if not line:
                break
            parts = line.split(maxsplit=3)
            if len(parts) < 3:
                click.echo("skipped (need three scores)")
                continue
            store.record_review(ReviewRecord(
                note_id=note_id,
                reviewer_id=reviewer,
                coherence=int(parts[0]),
                clinical_relevance=int(parts[1]),
                format_adherence=int(parts[2]),
                comments=parts[3].strip() if len(parts) > 3 else "",
                timestamp=timestamp,
            ))
    click.echo(f"recorded {len(store.records)} reviews -> {out}")


@main.command("summarize-reviews")
@click.argument("reviews_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--json-out", type=click.Path(dir_okay=False), default=None)
@click.option("--csv-out", type=click.Path(dir_okay=False), default=None)
def summarize_reviews_cmd(reviews_path, json_out, csv_out):
    """Per-criterion means/std-devs and pairwise Cohen's kappa."""
    records = []
    with open(reviews_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(ReviewRecord.from_dict(json.loads(line)))
    summary = summarize_reviews(records)
    _echo_json(summary.as_dict(), json_out)
    if csv_out:
        with open(csv_out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["criterion", "mean", "stddev"])
            for criterion, mean in summary.criterion_means.items():
                writer.writerow([criterion, repr(mean),
                                 repr(summary.criterion_stddevs[criterion])])


@main.command()
@click.pass_context
def pipeline(ctx):
    """Run the staged pipeline: ingest, clean, split, train, generate, evaluate, report."""
    try:
        config = load_config(ctx.obj.get("config_path"))
        if ctx.obj.get("seed") is not None:
            config["seed"] = ctx.obj["seed"]
        if ctx.obj.get("out_dir") is not None:
            config["out_dir"] = ctx.obj["out_dir"]
        manifest = run_pipeline(config)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    for stage in manifest.stages:
        click.echo(f"{stage['name']}: {stage['status']} ({stage['seconds']:.2f}s)")
    click.echo(f"run {manifest.run_id} complete -> {config['out_dir']}/manifest.json")


if __name__ == "__main__":
    main()
