"""Command-line surface: gen-toy, extract-feats, train-editor, augment,
synth and eval, bound together by a TOML config.

Config sections are `paths`, `fbank`, `model`, `augment` and `eval`, plus a
top-level `seed`; unknown keys are hard errors (a silent typo in an
experiment config is worse than a failed run).  Command-line flags override
config values.  Every command that writes artifacts drops a `job.json`
provenance record beside them, and all stochastic commands echo their
effective seed.  Errors exit nonzero with a single `error: ...` line on
stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__, augpipe, corpus, dsp, evalkit, textgen
from .editmodel import EditModelConfig, SpeechEditor, train_editor

_PATH_KEYS = (
    "manifest",
    "alignments",
    "lexicon",
    "names",
    "templates",
    "specs",
    "model",
    "out_dir",
)
_AUGMENT_KEYS = ("recipe", "mix_real", "mix_ratio", "gl_iterations", "jobs")
_EVAL_KEYS = ("hyp", "report")


@dataclass
class RunConfig:
    paths: dict = field(default_factory=dict)
    fbank: dsp.FbankConfig = field(default_factory=dsp.FbankConfig)
    model: EditModelConfig = field(default_factory=EditModelConfig)
    augment: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    seed: int | None = None


def _check_keys(section: str, obj: dict, allowed) -> None:
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ValueError(f"unknown config key {unknown[0]!r} in section [{section}]")


def _build_dataclass(section: str, cls, obj: dict):
    fields = {f.name: f.type for f in dataclasses.fields(cls)}
    _check_keys(section, obj, fields)
    base = cls()
    for key, value in obj.items():
        expected = type(getattr(base, key))
        if not isinstance(value, expected) and not (expected is float and isinstance(value, int)):
            raise ValueError(
                f"config key {key!r} in [{section}] expects {expected.__name__}, "
                f"got {type(value).__name__}"
            )
    return dataclasses.replace(base, **obj)


def load_config(path) -> RunConfig:
    """Parse a TOML run config; unknown keys and type mismatches fail."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config not found: {path}")
    with open(path, "rb") as f:
        raw = tomllib.load(f)
    _check_keys("top level", raw, ("paths", "fbank", "model", "augment", "eval", "seed"))
    config = RunConfig()
    if "seed" in raw:
        if not isinstance(raw["seed"], int):
            raise ValueError("config key 'seed' expects int")
        config.seed = raw["seed"]
    if "paths" in raw:
        _check_keys("paths", raw["paths"], _PATH_KEYS)
        config.paths = dict(raw["paths"])
    if "fbank" in raw:
        config.fbank = _build_dataclass("fbank", dsp.FbankConfig, raw["fbank"])
    if "model" in raw:
        config.model = _build_dataclass("model", EditModelConfig, raw["model"])
    if "augment" in raw:
        _check_keys("augment", raw["augment"], _AUGMENT_KEYS)
        config.augment = dict(raw["augment"])
    if "eval" in raw:
        _check_keys("eval", raw["eval"], _EVAL_KEYS)
        config.eval = dict(raw["eval"])
    return config


def _merged(config: RunConfig, args: argparse.Namespace, key: str, section: str = "paths"):
    value = getattr(args, key.replace("-", "_"), None)
    if value is not None:
        return value
    store = getattr(config, section)
    return store.get(key) if isinstance(store, dict) else None


def _require(value, flag: str):
    if value is None:
        raise ValueError(f"missing required option --{flag} (or its config entry)")
    return value


def _require_path(value, flag: str) -> Path:
    path = Path(_require(value, flag))
    if not path.exists():
        raise FileNotFoundError(f"--{flag}: path does not exist: {path}")
    return path


def _effective_seed(config: RunConfig, args) -> int:
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = config.seed
    if seed is None:
        raise ValueError("a --seed (or config seed) is required for this command")
    print(f"seed: {seed}")
    return seed


def _write_job_json(out_dir: Path, command: str, payload: dict) -> None:
    record = {
        "command": command,
        "version": __version__,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    record.update(payload)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "job.json", "w", encoding="utf-8") as f:
        json.dump(record, f, ensure_ascii=False, indent=2)
        f.write("\n")


def cmd_gen_toy(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    seed = _effective_seed(config, args)
    out_dir = Path(_require(_merged(config, args, "out_dir"), "out-dir"))
    manifest = corpus.generate_toy_corpus(seed, args.n_utts, args.vocab_size, out_dir)
    _write_job_json(
        out_dir,
        "gen-toy",
        {"seed": seed, "n_utts": args.n_utts, "vocab_size": args.vocab_size},
    )
    print(f"wrote {len(manifest.entries)} toy utterances to {out_dir}")
    return 0


def cmd_extract_feats(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    manifest_path = _require_path(_merged(config, args, "manifest"), "manifest")
    out_dir = Path(_require(_merged(config, args, "out_dir"), "out-dir"))
    manifest = corpus.load_manifest(manifest_path)
    feats_dir = out_dir / "feats"
    feats_dir.mkdir(parents=True, exist_ok=True)

    def extract(utt):
        wave_in = dsp.read_wav(manifest.resolve_audio(utt))
        mel = dsp.extract_fbank(wave_in, config.fbank)
        rel = f"feats/{utt.id}.melf"
        dsp.write_mel(out_dir / rel, mel)
        return dataclasses.replace(utt, audio=str(manifest.resolve_audio(utt)), feats=rel)

    if args.jobs and args.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            entries = list(pool.map(extract, manifest.entries))
    else:
        entries = [extract(utt) for utt in manifest.entries]
    out_manifest = corpus.CorpusManifest(entries=entries, root=out_dir)
    corpus.save_manifest(out_manifest, out_dir / "manifest.jsonl")
    _write_job_json(
        out_dir,
        "extract-feats",
        {"manifest": str(manifest_path), "fbank": dataclasses.asdict(config.fbank)},
    )
    print(f"extracted features for {len(entries)} utterances to {out_dir}")
    return 0


def cmd_train_editor(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    seed = _effective_seed(config, args)
    manifest_path = _require_path(_merged(config, args, "manifest"), "manifest")
    align_path = _require_path(_merged(config, args, "alignments"), "alignments")
    out_path = Path(_require(_merged(config, args, "model"), "model"))
    manifest = corpus.load_manifest(manifest_path)
    alignments = corpus.ingest_alignment(align_path, manifest)
    lexicon = None
    lexicon_path = _merged(config, args, "lexicon")
    if lexicon_path is not None:
        lexicon = textgen.load_lexicon(lexicon_path)
    model_config = dataclasses.replace(config.model, seed=seed)
    editor, losses = train_editor(
        manifest,
        alignments,
        config=model_config,
        steps=args.steps,
        batch_size=args.batch_size,
        fbank=config.fbank,
        lexicon=lexicon,
        early_stop_l1=args.early_stop_l1,
        log_fn=lambda step, loss: print(f"step {step}: loss {loss:.4f}"),
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    editor.save(out_path)
    _write_job_json(
        out_path.parent,
        "train-editor",
        {
            "seed": seed,
            "manifest": str(manifest_path),
            "alignments": str(align_path),
            "steps_requested": args.steps,
            "steps_run": len(losses),
            "final_loss": losses[-1] if losses else None,
            "model": str(out_path),
            "model_config": dataclasses.asdict(editor.config),
        },
    )
    print(f"trained {len(losses)} steps; checkpoint at {out_path}")
    return 0


def cmd_augment(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    seed = _effective_seed(config, args)
    recipe_name = _merged(config, args, "recipe", section="augment")
    recipe_name = _require(recipe_name, "recipe")
    try:
        recipe = augpipe.RecipeKind(recipe_name)
    except ValueError:
        valid = ", ".join(k.value for k in augpipe.RecipeKind)
        raise ValueError(f"unknown recipe {recipe_name!r}; valid recipes: {valid}") from None
    manifest_path = _require_path(_merged(config, args, "manifest"), "manifest")
    align_path = _require_path(_merged(config, args, "alignments"), "alignments")
    specs_path = _require_path(_merged(config, args, "specs"), "specs")
    model_path = _require_path(_merged(config, args, "model"), "model")
    lexicon_path = _require_path(_merged(config, args, "lexicon"), "lexicon")
    out_dir = Path(_require(_merged(config, args, "out_dir"), "out-dir"))

    manifest = corpus.load_manifest(manifest_path)
    alignments = corpus.ingest_alignment(align_path, manifest)
    specs = augpipe.load_edit_specs(specs_path, manifest)
    editor = SpeechEditor.load(model_path)
    lexicon = textgen.load_lexicon(lexicon_path)
    gl_iterations = args.gl_iterations
    if gl_iterations is None:
        gl_iterations = config.augment.get("gl_iterations", 60)
    job = augpipe.AugJob(
        manifest=manifest,
        alignments=alignments,
        specs=specs,
        recipe=recipe,
        out_dir=out_dir,
        seed=seed,
        editor=editor,
        lexicon=lexicon,
        fbank=config.fbank,
        gl_iterations=gl_iterations,
    )
    jobs = args.jobs if args.jobs is not None else config.augment.get("jobs", 1)
    output = augpipe.build_augmentation_set(
        job,
        provenance={
            "manifest": str(manifest_path),
            "alignments": str(align_path),
            "specs": str(specs_path),
            "model": str(model_path),
        },
        jobs=jobs,
    )
    mix_ratio = args.mix_ratio
    if mix_ratio is None:
        mix_ratio = config.augment.get("mix_ratio")
    if mix_ratio is not None:
        mix_real = _merged(config, args, "mix_real", section="augment")
        real_manifest = corpus.load_manifest(_require_path(mix_real, "mix-real"))
        mixed = augpipe.mix_sets(output.manifest, real_manifest, float(mix_ratio), seed)
        corpus.save_manifest(mixed, out_dir / "manifest_mixed.jsonl")
        print(f"mixed manifest: {len(mixed.entries)} entries")
    print(f"augmented {len(output.manifest.entries)} utterances ({recipe.value}) to {out_dir}")
    return 0


def cmd_synth(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    model_path = _require_path(_merged(config, args, "model"), "model")
    editor = SpeechEditor.load(model_path)
    lexicon_path = _merged(config, args, "lexicon")
    lexicon = textgen.load_lexicon(lexicon_path) if lexicon_path else textgen.Lexicon()
    tokens = textgen.parse_text_tokens(args.text)
    if not tokens:
        raise ValueError("no tokens to synthesize")
    phones = []
    for token in tokens:
        phones.extend(textgen.phonemize(token, lexicon).phones)
    mel = editor.synth_full(phones)
    raw = dsp.denormalize_mel(mel, editor.stats)
    wave_out = dsp.griffin_lim_vocode(raw, config.fbank, iterations=args.gl_iterations or 60)
    out_path = Path(_require(args.out, "out"))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    dsp.write_wav(out_path, wave_out)
    print(f"synthesized {mel.n_frames} frames to {out_path}")
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    ref_path = _require_path(args.ref or config.paths.get("manifest"), "ref")
    hyp_path = _require_path(args.hyp or config.eval.get("hyp"), "hyp")
    report_path = Path(_require(args.out or config.eval.get("report"), "out"))
    manifest = corpus.load_manifest(ref_path)
    hypotheses = evalkit.load_hypotheses(hyp_path)
    names = None
    names_path = _merged(config, args, "names")
    if names_path is not None:
        names = textgen.load_name_list(names_path)
    report = evalkit.score_corpus(manifest.entries, hypotheses, names)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    evalkit.write_report(report_path, report)
    print(
        f"cer_man={report.cer_man:.2f} wer_eng={report.wer_eng:.2f} mer={report.mer:.2f} "
        f"entity_recall={report.entity_recall:.2f} entity_precision={report.entity_precision:.2f}"
    )
    print(f"report written to {report_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="editaug",
        description="Text-based speech editing for ASR data augmentation.",
    )
    parser.add_argument("--version", action="version", version=f"editaug {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-toy", help="generate the deterministic sine-tone toy corpus")
    p.add_argument("--config", help="TOML run config")
    p.add_argument("--seed", type=int, help="RNG seed (required here or in config)")
    p.add_argument("--n-utts", type=int, default=50, help="number of utterances")
    p.add_argument("--vocab-size", type=int, default=10, help="toy phone vocabulary size (<= 20)")
    p.add_argument("--out-dir", help="output directory")
    p.set_defaults(func=cmd_gen_toy)

    p = sub.add_parser("extract-feats", help="extract log-mel features for a manifest")
    p.add_argument("--config", help="TOML run config")
    p.add_argument("--manifest", help="input manifest (JSONL)")
    p.add_argument("--out-dir", help="output directory for feats/ and manifest.jsonl")
    p.add_argument("--jobs", type=int, default=None, help="worker count for per-utterance work")
    p.set_defaults(func=cmd_extract_feats)

    p = sub.add_parser("train-editor", help="train the mel editing model")
    p.add_argument("--config", help="TOML run config")
    p.add_argument("--seed", type=int, help="RNG seed (required here or in config)")
    p.add_argument("--manifest", help="training manifest (JSONL)")
    p.add_argument("--alignments", help="phone alignment file")
    p.add_argument("--lexicon", help="lexicon file (adds its phones to the vocabulary)")
    p.add_argument("--model", help="output checkpoint path")
    p.add_argument("--steps", type=int, default=2000, help="training steps")
    p.add_argument("--batch-size", type=int, default=8, help="utterances per step")
    p.add_argument(
        "--early-stop-l1",
        type=float,
        default=None,
        help="stop once masked-region L1 on training data drops below this",
    )
    p.set_defaults(func=cmd_train_editor)

    p = sub.add_parser("augment", help="build an augmentation set from edit specs")
    p.add_argument("--config", help="TOML run config")
    p.add_argument("--seed", type=int, help="RNG seed (required here or in config)")
    p.add_argument(
        "--recipe",
        help="one of: " + ", ".join(k.value for k in augpipe.RecipeKind),
    )
    p.add_argument("--manifest", help="source manifest (JSONL)")
    p.add_argument("--alignments", help="phone alignment file")
    p.add_argument("--specs", help="edit-spec JSONL")
    p.add_argument("--model", help="trained editor checkpoint")
    p.add_argument("--lexicon", help="lexicon file")
    p.add_argument("--out-dir", help="output directory")
    p.add_argument("--gl-iterations", type=int, default=None, help="Griffin-Lim iterations")
    p.add_argument("--mix-ratio", type=float, default=None, help="real entries per augmented entry")
    p.add_argument("--mix-real", help="manifest of real entries to mix in")
    p.add_argument("--jobs", type=int, default=None, help="worker count for per-utterance work")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("synth", help="synthesize a waveform from text (full-mask editing)")
    p.add_argument("--config", help="TOML run config")
    p.add_argument("--model", help="trained editor checkpoint")
    p.add_argument("--lexicon", help="lexicon file")
    p.add_argument("--text", required=True, help="text to synthesize")
    p.add_argument("--out", help="output WAV path")
    p.add_argument("--gl-iterations", type=int, default=None, help="Griffin-Lim iterations")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score hypotheses against a reference manifest")
    p.add_argument("--config", help="TOML run config")
    p.add_argument("--ref", help="reference manifest (JSONL)")
    p.add_argument("--hyp", help="hypothesis file (utt_id<TAB>text)")
    p.add_argument("--names", help="name list for entity recall/precision")
    p.add_argument("--out", help="output report JSON path")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
