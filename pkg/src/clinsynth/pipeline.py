"""Pipeline orchestration: staged execution, run manifest, derived seeds.

Every stage reads only artifacts written by earlier stages and writes its
own under the run directory, so re-running after deleting a downstream
artifact re-executes just the affected stages. Artifacts contain no
timestamps; given the same config, seed, and inputs they are byte-identical
across runs. Timings live only in the manifest.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

from . import __version__
from .adversarial import GanConfig, generator_sample, load_gan, save_gan, train_adversarial
from .adversarial import export_curves as export_gan_curves
from .config import validate_config
from .corpus import Corpus, compute_stats, ingest, split_corpus, write_jsonl
from .llm import GenerationRequest, MockProvider, HttpProvider, generate_batch, parse_transcript_response
from .metrics import CorruptionRates, bleu, corpus_bleu, corrupt_transcript, wer
from .mixture import fit_em, load_mixture, sample_mixture, save_mixture
from .mixture import export_curves as export_mixture_curves
from .ngram import SamplerConfig, load_ngram, sample_sequence, save_ngram, score_perplexity, train_ngram
from .preprocess import (PreprocessConfig, build_vocabulary, clean_corpus,
                         default_abbreviations, load_abbreviations, tokenize)
from .templates import DEFAULT_FEWSHOT_INSTRUCTION, build_fewshot_prompt, default_fewshot_examples, default_lexicon, default_template, fill_template


def stage_seed(seed: int, stage: str) -> int:
    """Derive a stage-local seed: global seed mixed with the stage-name hash."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def fixture_corpus_path() -> Path:
    return Path(str(resources.files("clinsynth.data").joinpath("fixtures/notes.jsonl")))


def _sha256(path: Path) -> str:
    if not path.exists():
        return "missing"
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(payload: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, ensure_ascii=False, indent=2)
        fh.write("\n")


def _read_json(path: Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _read_corpus(path: Path) -> Corpus:
    return ingest(path, format="jsonl")


def _write_notes(records: list[dict], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def _read_notes(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


@dataclass
class Stage:
    name: str
    outputs: list[Path]
    run: Callable[[], None]


@dataclass
class RunManifest:
    run_id: str
    tool_version: str
    seed: int
    config: dict
    input_hashes: dict[str, str]
    stages: list[dict] = field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""

    def as_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "tool_version": self.tool_version,
            "seed": self.seed,
            "config": self.config,
            "input_hashes": self.input_hashes,
            "stages": self.stages,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


class PipelineRunner:
    def __init__(self, config: dict, out_dir: str | Path | None = None):
        self.config = validate_config(config if config else {})
        self.out_dir = Path(out_dir or self.config["out_dir"])
        self.seed = self.config["seed"]
        clean = self.config["clean"]
        abbreviations = (load_abbreviations(clean["abbreviations_path"])
                         if clean["abbreviations_path"] else default_abbreviations())
        self.preprocess_config = PreprocessConfig(
            lowercase=clean["lowercase"],
            min_token_count=clean["min_token_count"],
            preserve_deid_markers=clean["preserve_deid_markers"],
            abbreviations=abbreviations,
        )

    # ---- paths ----------------------------------------------------------

    def path(self, *parts: str) -> Path:
        return self.out_dir.joinpath(*parts)

    @property
    def ingest_path(self) -> Path:
        configured = self.config["ingest"]["path"]
        return Path(configured) if configured else fixture_corpus_path()

    # ---- stage bodies ----------------------------------------------------

    def _stage_ingest(self) -> None:
        corpus = ingest(
            self.ingest_path,
            format=self.config["ingest"]["format"],
            column_map=self.config["ingest"]["column_map"],
        )
        write_jsonl(corpus, self.path("ingest", "corpus.jsonl"))

    def _stage_clean(self) -> None:
        corpus = _read_corpus(self.path("ingest", "corpus.jsonl"))
        cleaned, rejections = clean_corpus(corpus, self.preprocess_config)
        write_jsonl(cleaned, self.path("clean", "corpus.jsonl"))
        _write_json(
            {"rejected": [{"id": note_id, "reason": reason} for note_id, reason in rejections]},
            self.path("clean", "rejections.json"),
        )

    def _stage_split(self) -> None:
        corpus = _read_corpus(self.path("clean", "corpus.jsonl"))
        ratios = self.config["split"]
        split = split_corpus(
            corpus,
            (ratios["train"], ratios["validation"], ratios["test"]),
            stage_seed(self.seed, "split"),
        )
        write_jsonl(split, self.path("split", "corpus.jsonl"))

    def _split_tokens(self, split: str) -> list[list[str]]:
        corpus = _read_corpus(self.path("split", "corpus.jsonl"))
        return [tokenize(n.text, self.preprocess_config) for n in corpus.by_split(split)]

    def _stage_train_lm(self) -> None:
        sequences = self._split_tokens("train")
        settings = self.config["train"]["lm"]
        vocabulary = build_vocabulary(sequences, self.preprocess_config)
        model = train_ngram(sequences, settings["order"], settings["alpha"], vocabulary)
        save_ngram(model, self.path("train", "lm.json"))

    def _stage_train_gan(self) -> None:
        settings = dict(self.config["train"]["gan"])
        settings.pop("enabled")
        max_sequences = settings.pop("max_sequences")
        sequences = self._split_tokens("train")[:max_sequences]
        sequences = [seq[: settings["max_length"]] for seq in sequences]
        state = train_adversarial(
            sequences, GanConfig(seed=stage_seed(self.seed, "train_gan"), **settings)
        )
        save_gan(state, self.path("train", "gan.json"))
        export_gan_curves(state, self.path("train", "gan_curves.csv"))

    def _stage_train_mixture(self) -> None:
        settings = self.config["train"]["mixture"]
        sequences = self._split_tokens("train")
        model = fit_em(
            sequences,
            k=settings["k"],
            alpha=settings["alpha"],
            iterations=settings["iterations"],
            seed=stage_seed(self.seed, "train_mixture"),
            order=settings["order"],
        )
        save_mixture(model, self.path("train", "mixture.json"))
        export_mixture_curves(model, self.path("train", "mixture_curves.csv"))

    def _sampler_config(self, seed: int) -> SamplerConfig:
        sampler = self.config["generate"]["sampler"]
        top_k = sampler["top_k"]
        if isinstance(top_k, str) and top_k != "all":
            top_k = int(top_k)
        return SamplerConfig(
            temperature=sampler["temperature"],
            top_k=top_k,
            top_p=sampler["top_p"],
            max_length=sampler["max_length"],
            seed=seed,
        )

    def _stage_generate_template(self) -> None:
        count = self.config["generate"]["count"]
        base_seed = stage_seed(self.seed, "generate_template")
        template = default_template()
        lexicon = default_lexicon()
        records = [
            {
                "id": f"template-{i:04d}",
                "provenance": "template",
                "text": fill_template(template, lexicon, base_seed + i),
            }
            for i in range(count)
        ]
        _write_notes(records, self.path("generate", "template.jsonl"))

    def _stage_generate_sample(self) -> None:
        count = self.config["generate"]["count"]
        base_seed = stage_seed(self.seed, "generate_sample")
        model = load_ngram(self.path("train", "lm.json"))
        records = []
        for i in range(count):
            tokens = sample_sequence(model, self._sampler_config(base_seed + i))
            records.append({
                "id": f"ngram-{i:04d}",
                "provenance": "ngram",
                "text": " ".join(tokens),
            })
        _write_notes(records, self.path("generate", "sampled.jsonl"))

    def _stage_generate_gan(self) -> None:
        count = self.config["generate"]["count"]
        state = load_gan(self.path("train", "gan.json"))
        samples = generator_sample(state.generator, stage_seed(self.seed, "generate_gan"), count)
        records = [
            {
                "id": f"gan-{i:04d}",
                "provenance": "gan",
                "text": " ".join(sample.tokens),
            }
            for i, sample in enumerate(samples)
        ]
        _write_notes(records, self.path("generate", "gan.jsonl"))

    def _stage_generate_mixture(self) -> None:
        count = self.config["generate"]["count"]
        base_seed = stage_seed(self.seed, "generate_mixture")
        model = load_mixture(self.path("train", "mixture.json"))
        records = []
        for i in range(count):
            tokens = sample_mixture(model, self._sampler_config(base_seed + i))
            records.append({
                "id": f"mixture-{i:04d}",
                "provenance": "mixture",
                "text": " ".join(tokens),
            })
        _write_notes(records, self.path("generate", "mixture.jsonl"))

    def _stage_generate_llm(self) -> None:
        settings = self.config["generate"]["llm"]
        count = self.config["generate"]["count"]
        conditions = settings["conditions"]
        examples = list(default_fewshot_examples())
        requests = []
        for i in range(count):
            condition = conditions[i % len(conditions)]
            prompt = build_fewshot_prompt(DEFAULT_FEWSHOT_INSTRUCTION, examples, condition)
            requests.append(GenerationRequest(
                request_id=f"llm-{i:04d}",
                prompt=prompt,
                model=settings["model"],
                temperature=settings["temperature"],
                max_tokens=settings["max_tokens"],
            ))
        if settings["provider"] == "mock":
            provider = MockProvider(fixtures_dir=settings["fixtures_dir"])
        else:
            token = os.environ.get("CLINSYNTH_API_TOKEN", settings["auth_token"])
            provider = HttpProvider(endpoint=settings["endpoint"], auth_token=token)
        responses, errors = generate_batch(
            requests, provider,
            max_retries=settings["max_retries"],
            max_inflight=settings["max_inflight"],
        )
        condition_by_id = {r.request_id: conditions[i % len(conditions)]
                           for i, r in enumerate(requests)}
        transcripts = []
        notes = []
        parse_failures = []
        for response in responses:
            try:
                record = parse_transcript_response(
                    response.completion, scenario=condition_by_id[response.request_id]
                )
            except ValueError as exc:
                parse_failures.append({"request_id": response.request_id, "error": str(exc)})
                continue
            transcripts.append(record.as_dict())
            notes.append({
                "id": response.request_id,
                "provenance": "llm",
                "text": record.to_text(),
            })
        with open(self.path("generate", "llm_transcripts.jsonl"), "w", encoding="utf-8") as fh:
            for record in transcripts:
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
        _write_notes(notes, self.path("generate", "llm_notes.jsonl"))
        _write_json(
            {
                "request_errors": [
                    {"request_id": e.request_id, "message": e.message,
                     "attempts": e.attempts, "permanent": e.permanent}
                    for e in errors
                ],
                "parse_failures": parse_failures,
            },
            self.path("generate", "llm_errors.json"),
        )

    def _generated_notes(self) -> dict[str, list[dict]]:
        files = {
            "template": "template.jsonl",
            "sample": "sampled.jsonl",
            "gan": "gan.jsonl",
            "mixture": "mixture.jsonl",
            "llm": "llm_notes.jsonl",
        }
        notes = {}
        for method in self.config["generate"]["methods"]:
            path = self.path("generate", files[method])
            notes[method] = [n for n in _read_notes(path) if n["text"].strip()]
        return notes

    def _stage_evaluate_perplexity(self) -> None:
        model = load_ngram(self.path("train", "lm.json"))
        lm_settings = self.config["train"]["lm"]
        report: dict = {"synthetic_under_real_lm": {}, "real_test_under_real_lm": None,
                        "real_test_under_synthetic_lm": None}
        all_tokens = []
        for method, notes in self._generated_notes().items():
            sequences = [tokenize(n["text"], self.preprocess_config) for n in notes]
            sequences = [s for s in sequences if s]
            if sequences:
                report["synthetic_under_real_lm"][method] = score_perplexity(model, sequences)
                all_tokens.extend(sequences)
        test_tokens = [s for s in self._split_tokens("test") if s]
        if test_tokens:
            report["real_test_under_real_lm"] = score_perplexity(model, test_tokens)
        if all_tokens and test_tokens:
            # reverse direction: a model of the synthetic text scoring real text
            synthetic_lm = train_ngram(all_tokens, lm_settings["order"], lm_settings["alpha"])
            report["real_test_under_synthetic_lm"] = score_perplexity(synthetic_lm, test_tokens)
        _write_json(report, self.path("evaluate", "perplexity.json"))

    def _stage_evaluate_bleu(self) -> None:
        settings = self.config["evaluate"]["bleu"]
        references = [
            s for s in self._split_tokens("test") if s
        ][: settings["max_references"]]
        report = {}
        rows = []
        for method, notes in self._generated_notes().items():
            pairs = []
            for note in notes[: settings["max_candidates"]]:
                candidate = tokenize(note["text"], self.preprocess_config)
                if not candidate or not references:
                    continue
                pairs.append((candidate, references))
                single = bleu(candidate, references, settings["max_order"], smooth=settings["smooth"])
                rows.append((method, note["id"], single.bleu, single.brevity_penalty))
            if pairs:
                corpus_report = corpus_bleu(pairs, settings["max_order"], smooth=settings["smooth"])
                report[method] = corpus_report.as_dict()
        _write_json(report, self.path("evaluate", "bleu.json"))
        with open(self.path("evaluate", "bleu_pairs.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "id", "bleu", "brevity_penalty"])
            for method, note_id, score, bp in rows:
                writer.writerow([method, note_id, repr(score), repr(bp)])

    def _stage_evaluate_wer(self) -> None:
        settings = self.config["evaluate"]["wer"]
        references = [s for s in self._split_tokens("test") if s][: settings["max_references"]]
        vocabulary = build_vocabulary(references) if references else None
        base_seed = stage_seed(self.seed, "evaluate_wer")
        report = {}
        rows = []
        for channel_name, raw_rates in sorted(settings["channels"].items()):
            rates = CorruptionRates(**raw_rates)
            edits = 0
            length = 0
            for i, reference in enumerate(references):
                hypothesis = corrupt_transcript(reference, rates, vocabulary, seed=base_seed + i)
                result = wer(reference, hypothesis)
                edits += result.edits
                length += result.reference_length
                rows.append((channel_name, i, result.wer, result.substitutions,
                             result.deletions, result.insertions))
            report[channel_name] = {
                "rates": {"substitution": rates.substitution, "deletion": rates.deletion,
                          "insertion": rates.insertion, "total": rates.total},
                "corpus_wer": edits / length if length else None,
                "references": len(references),
            }
        _write_json(report, self.path("evaluate", "wer.json"))
        with open(self.path("evaluate", "wer_pairs.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["channel", "reference_index", "wer",
                             "substitutions", "deletions", "insertions"])
            for row in rows:
                writer.writerow([row[0], row[1], repr(row[2]), row[3], row[4], row[5]])

    def _stage_report(self) -> None:
        corpus = _read_corpus(self.path("split", "corpus.jsonl"))
        stats = compute_stats(corpus, bucket_width=self.config["report"]["bucket_width"])
        _write_json(stats.as_dict(), self.path("report", "stats.json"))
        with open(self.path("report", "histogram.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lo", "hi", "count"])
            for lo, hi, count in stats.histogram:
                writer.writerow([lo, hi, count])

        report = {
            "corpus": {
                "notes": len(corpus),
                "mean_length": stats.mean_length,
                "stddev_length": stats.stddev_length,
                "categories": dict(sorted(stats.categories.items())),
                "splits": {s: len(corpus.by_split(s)) for s in ("train", "validation", "test")},
            },
            "generated": {
                method: len(notes) for method, notes in self._generated_notes().items()
            },
        }
        for section, filename in (
            ("perplexity", "perplexity.json"),
            ("bleu", "bleu.json"),
            ("wer", "wer.json"),
        ):
            path = self.path("evaluate", filename)
            report[section] = _read_json(path) if path.exists() else None
        _write_json(report, self.path("report", "report.json"))

    # ---- orchestration ---------------------------------------------------

    def stages(self) -> list[Stage]:
        config = self.config
        methods = config["generate"]["methods"]
        stages = [
            Stage("ingest", [self.path("ingest", "corpus.jsonl")], self._stage_ingest),
            Stage("clean", [self.path("clean", "corpus.jsonl"),
                            self.path("clean", "rejections.json")], self._stage_clean),
            Stage("split", [self.path("split", "corpus.jsonl")], self._stage_split),
        ]
        if config["train"]["lm"]["enabled"]:
            stages.append(Stage("train_lm", [self.path("train", "lm.json")], self._stage_train_lm))
        if config["train"]["gan"]["enabled"]:
            stages.append(Stage("train_gan", [self.path("train", "gan.json"),
                                              self.path("train", "gan_curves.csv")],
                                self._stage_train_gan))
        if config["train"]["mixture"]["enabled"]:
            stages.append(Stage("train_mixture", [self.path("train", "mixture.json"),
                                                  self.path("train", "mixture_curves.csv")],
                                self._stage_train_mixture))
        generate_stages = {
            "template": Stage("generate_template", [self.path("generate", "template.jsonl")],
                              self._stage_generate_template),
            "sample": Stage("generate_sample", [self.path("generate", "sampled.jsonl")],
                            self._stage_generate_sample),
            "gan": Stage("generate_gan", [self.path("generate", "gan.jsonl")],
                         self._stage_generate_gan),
            "mixture": Stage("generate_mixture", [self.path("generate", "mixture.jsonl")],
                             self._stage_generate_mixture),
            "llm": Stage("generate_llm", [self.path("generate", "llm_transcripts.jsonl"),
                                          self.path("generate", "llm_notes.jsonl"),
                                          self.path("generate", "llm_errors.json")],
                         self._stage_generate_llm),
        }
        for method in methods:
            stages.append(generate_stages[method])
        if config["evaluate"]["perplexity"]["enabled"]:
            stages.append(Stage("evaluate_perplexity",
                                [self.path("evaluate", "perplexity.json")],
                                self._stage_evaluate_perplexity))
        if config["evaluate"]["bleu"]["enabled"]:
            stages.append(Stage("evaluate_bleu",
                                [self.path("evaluate", "bleu.json"),
                                 self.path("evaluate", "bleu_pairs.csv")],
                                self._stage_evaluate_bleu))
        if config["evaluate"]["wer"]["enabled"]:
            stages.append(Stage("evaluate_wer",
                                [self.path("evaluate", "wer.json"),
                                 self.path("evaluate", "wer_pairs.csv")],
                                self._stage_evaluate_wer))
        stages.append(Stage("report", [self.path("report", "report.json"),
                                       self.path("report", "stats.json"),
                                       self.path("report", "histogram.csv")],
                            self._stage_report))
        return stages

    def run(self) -> RunManifest:
        config_blob = json.dumps(self.config, sort_keys=True)
        manifest = RunManifest(
            run_id=hashlib.sha256(config_blob.encode("utf-8")).hexdigest()[:16],
            tool_version=__version__,
            seed=self.seed,
            config=self.config,
            input_hashes={str(self.ingest_path): _sha256(self.ingest_path)},
            started_at=time.strftime("%Y-%m-%dT%H:%M:%S"),
        )
        manifest_path = self.path("manifest.json")
        self.out_dir.mkdir(parents=True, exist_ok=True)
        try:
            for stage in self.stages():
                entry = {"name": stage.name, "outputs": {}, "status": "pending", "seconds": 0.0}
                manifest.stages.append(entry)
                if all(p.exists() for p in stage.outputs):
                    entry["status"] = "cached"
                else:
                    for output in stage.outputs:
                        output.parent.mkdir(parents=True, exist_ok=True)
                    started = time.perf_counter()
                    stage.run()
                    entry["seconds"] = round(time.perf_counter() - started, 6)
                    missing = [p for p in stage.outputs if not p.exists()]
                    if missing:
                        raise RuntimeError(f"stage {stage.name} did not write {missing}")
                    entry["status"] = "computed"
                entry["outputs"] = {
                    str(p.relative_to(self.out_dir)): _sha256(p) for p in stage.outputs
                }
        except Exception as exc:
            # record partial completion before propagating
            if manifest.stages and manifest.stages[-1]["status"] == "pending":
                manifest.stages[-1]["status"] = f"failed: {exc}"
            manifest.finished_at = time.strftime("%Y-%m-%dT%H:%M:%S")
            _write_json(manifest.as_dict(), manifest_path)
            raise
        manifest.finished_at = time.strftime("%Y-%m-%dT%H:%M:%S")
        _write_json(manifest.as_dict(), manifest_path)
        return manifest


def run_pipeline(config: dict | None = None, out_dir: str | Path | None = None) -> RunManifest:
    """Validate the config, execute every enabled stage, and write the manifest."""
    return PipelineRunner(config or {}, out_dir).run()
