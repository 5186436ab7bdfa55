import json
from collections import Counter

import numpy as np
import pytest

from editaug import augpipe, corpus, dsp
from editaug.augpipe import AugJob, RecipeKind
from editaug.corpus import Lang, Token


def make_job(toy10, toy10_alignments, toy10_lexicon, small_editor, specs, recipe, out_dir, seed=11):
    _, manifest = toy10
    return AugJob(
        manifest=manifest,
        alignments=toy10_alignments,
        specs=specs,
        recipe=recipe,
        out_dir=out_dir,
        seed=seed,
        editor=small_editor,
        lexicon=toy10_lexicon,
        gl_iterations=20,
    )


@pytest.fixture(scope="module")
def loaded_specs(toy10, toy10_specs):
    _, manifest = toy10
    return augpipe.load_edit_specs(toy10_specs, manifest)


def test_load_edit_specs_ops_and_name_modes(tmp_path, toy10):
    _, manifest = toy10
    utt = manifest.entries[0]
    path = tmp_path / "specs.jsonl"
    records = [
        {
            "utt": utt.id,
            "ops": [
                {
                    "kind": "REPLACE",
                    "position": 0,
                    "length": 1,
                    "tokens": [{"surface": "pa", "lang": "ENGLISH", "entity": "NONE"}],
                }
            ],
        },
        {"utt": utt.id, "name": ["john", "smith"], "position": 1, "length": 1},
        {"utt": utt.id, "name": ["ann"], "position": 2, "length": 0},
    ]
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    specs = augpipe.load_edit_specs(path, manifest)
    assert len(specs) == 3
    assert specs[1].script.ops[0].new_tokens[0].entity.value == "PERSON_NAME"
    assert specs[2].script.ops[0].kind.value == "INSERT"


def test_load_edit_specs_errors(tmp_path, toy10):
    _, manifest = toy10
    path = tmp_path / "bad.jsonl"
    path.write_text('{"utt": "ghost", "name": ["x"], "position": 0}\n', encoding="utf-8")
    with pytest.raises(ValueError, match="ghost"):
        augpipe.load_edit_specs(path, manifest)
    path.write_text("{broken\n", encoding="utf-8")
    with pytest.raises(ValueError, match="line 1"):
        augpipe.load_edit_specs(path, manifest)
    path.write_text('{"utt": "%s"}\n' % manifest.entries[0].id, encoding="utf-8")
    with pytest.raises(ValueError, match="'ops' or 'name'"):
        augpipe.load_edit_specs(path, manifest)


def test_split_half_and_half():
    ten = augpipe.split_half_and_half(10, 11)
    assert Counter(ten) == {RecipeKind.EDIT_FEATS: 5, RecipeKind.TTS: 5}
    eleven = augpipe.split_half_and_half(11, 11)
    assert Counter(eleven) == {RecipeKind.EDIT_FEATS: 6, RecipeKind.TTS: 5}
    assert augpipe.split_half_and_half(10, 11) == ten


def test_presence_matrix_and_text_identity(
    tmp_path, toy10, toy10_alignments, toy10_lexicon, small_editor, loaded_specs
):
    _, manifest = toy10
    token_sets = {}
    for recipe in RecipeKind:
        out_dir = tmp_path / recipe.value.replace("+", "_")
        job = make_job(
            toy10, toy10_alignments, toy10_lexicon, small_editor, loaded_specs, recipe, out_dir
        )
        output = augpipe.build_augmentation_set(job)
        assert (out_dir / "job.json").exists()
        entries = output.manifest.entries
        assert len(entries) == len(loaded_specs)
        token_sets[recipe] = [[t.surface for t in u.tokens] for u in entries]
        for utt in entries:
            if utt.origin == "edit-feats":
                assert utt.feats is not None and utt.audio is None
                frames, bins, normalized = dsp.read_mel_header(output.manifest.resolve_feats(utt))
                assert bins == 80 and not normalized
            else:
                assert utt.audio is not None and utt.feats is None
                assert output.manifest.resolve_audio(utt).exists()
    reference = token_sets[RecipeKind.SPLICE]
    for recipe, tokens in token_sets.items():
        assert tokens == reference, f"token sequences differ for {recipe}"


def test_half_and_half_split_counts(
    tmp_path, toy10, toy10_alignments, toy10_lexicon, small_editor, loaded_specs
):
    job = make_job(
        toy10,
        toy10_alignments,
        toy10_lexicon,
        small_editor,
        loaded_specs,
        RecipeKind.EDIT_FEATS_PLUS_TTS,
        tmp_path / "half",
    )
    output = augpipe.build_augmentation_set(job)
    counts = Counter(u.origin for u in output.manifest.entries)
    assert counts == {"edit-feats": 5, "tts": 5}


def test_rerun_is_byte_identical(
    tmp_path, toy10, toy10_alignments, toy10_lexicon, small_editor, loaded_specs
):
    outs = []
    for tag in ("one", "two"):
        out_dir = tmp_path / tag
        job = make_job(
            toy10,
            toy10_alignments,
            toy10_lexicon,
            small_editor,
            loaded_specs[:4],
            RecipeKind.EDIT,
            out_dir,
        )
        augpipe.build_augmentation_set(job)
        outs.append(out_dir)
    a, b = outs
    assert (a / "manifest.jsonl").read_bytes() == (b / "manifest.jsonl").read_bytes()
    for wav in sorted((a / "wav").iterdir()):
        assert wav.read_bytes() == (b / "wav" / wav.name).read_bytes()


def test_edit_recipe_feature_consistency(
    tmp_path, toy10, toy10_alignments, toy10_lexicon, small_editor, loaded_specs
):
    """EDIT output audio re-extracts to the stitched mel's frame count;
    EDIT_FEATS persists that frame count directly."""
    _, manifest = toy10
    job_feats = make_job(
        toy10,
        toy10_alignments,
        toy10_lexicon,
        small_editor,
        loaded_specs[:3],
        RecipeKind.EDIT_FEATS,
        tmp_path / "feats",
    )
    feats_out = augpipe.build_augmentation_set(job_feats)
    job_edit = make_job(
        toy10,
        toy10_alignments,
        toy10_lexicon,
        small_editor,
        loaded_specs[:3],
        RecipeKind.EDIT,
        tmp_path / "edit",
    )
    edit_out = augpipe.build_augmentation_set(job_edit)
    for feats_utt, edit_utt in zip(feats_out.manifest.entries, edit_out.manifest.entries):
        frames, _, _ = dsp.read_mel_header(feats_out.manifest.resolve_feats(feats_utt))
        wave_in = dsp.read_wav(edit_out.manifest.resolve_audio(edit_utt))
        assert dsp.extract_fbank(wave_in).n_frames == frames


def test_splice_length_algebra(
    tmp_path, toy10, toy10_alignments, toy10_lexicon, small_editor
):
    _, manifest = toy10
    utt = manifest.entries[0]
    # pure insertion at a token boundary
    path = tmp_path / "ins.jsonl"
    record = {
        "utt": utt.id,
        "ops": [
            {
                "kind": "INSERT",
                "position": 1,
                "length": 0,
                "tokens": [{"surface": "pb", "lang": "ENGLISH", "entity": "NONE"}],
            }
        ],
    }
    path.write_text(json.dumps(record) + "\n", encoding="utf-8")
    specs = augpipe.load_edit_specs(path, manifest)
    job = make_job(
        toy10, toy10_alignments, toy10_lexicon, small_editor, specs, RecipeKind.SPLICE, tmp_path / "out"
    )
    output = augpipe.build_augmentation_set(job)
    out_utt = output.manifest.entries[0]
    original = dsp.read_wav(manifest.resolve_audio(utt))
    spliced = dsp.read_wav(output.manifest.resolve_audio(out_utt))
    pred = small_editor.predict_durations(["PB"])
    segment_len = (int(pred.realized.sum()) - 1) * 200 + 800
    assert len(spliced.samples) == len(original.samples) + segment_len


def test_fail_fast_names_utterance(
    tmp_path, toy10, toy10_lexicon, small_editor, loaded_specs
):
    job = make_job(
        toy10, {}, toy10_lexicon, small_editor, loaded_specs[:2], RecipeKind.EDIT, tmp_path / "x"
    )
    with pytest.raises(RuntimeError, match=loaded_specs[0].utt_id):
        augpipe.build_augmentation_set(job)


def test_parallel_jobs_match_sequential(
    tmp_path, toy10, toy10_alignments, toy10_lexicon, small_editor, loaded_specs
):
    outs = {}
    for jobs in (1, 3):
        out_dir = tmp_path / f"j{jobs}"
        job = make_job(
            toy10,
            toy10_alignments,
            toy10_lexicon,
            small_editor,
            loaded_specs[:6],
            RecipeKind.EDIT_FEATS,
            out_dir,
        )
        augpipe.build_augmentation_set(job, jobs=jobs)
        outs[jobs] = out_dir
    assert (outs[1] / "manifest.jsonl").read_bytes() == (outs[3] / "manifest.jsonl").read_bytes()
    for melf in sorted((outs[1] / "feats").iterdir()):
        assert melf.read_bytes() == (outs[3] / "feats" / melf.name).read_bytes()


def test_mix_sets_counts_and_tags(toy10, tmp_path, toy10_alignments, toy10_lexicon, small_editor, loaded_specs):
    _, manifest = toy10
    job = make_job(
        toy10,
        toy10_alignments,
        toy10_lexicon,
        small_editor,
        loaded_specs[:8],
        RecipeKind.EDIT_FEATS,
        tmp_path / "mixbase",
    )
    aug = augpipe.build_augmentation_set(job).manifest
    # build a 20-entry real pool by reusing toy entries with fresh ids
    import dataclasses as dc

    real_entries = []
    for i in range(20):
        src = manifest.entries[i % len(manifest.entries)]
        real_entries.append(dc.replace(src, id=f"real_{i:03d}"))
    real = corpus.CorpusManifest(entries=real_entries, root=manifest.root)

    mixed = augpipe.mix_sets(aug, real, 1.0, seed=4)
    assert len(mixed.entries) == 16
    assert sum(1 for u in mixed.entries if u.origin == "real") == 8
    again = augpipe.mix_sets(aug, real, 1.0, seed=4)
    assert corpus.serialize_manifest(again) == corpus.serialize_manifest(mixed)

    only_aug = augpipe.mix_sets(aug, real, 0.0, seed=4)
    assert len(only_aug.entries) == 8
    assert all(u.origin == "edit-feats" for u in only_aug.entries)

    small_pool = corpus.CorpusManifest(entries=real_entries[:4], root=manifest.root)
    with pytest.raises(ValueError, match="pool"):
        augpipe.mix_sets(aug, small_pool, 1.0, seed=4)


def test_mix_sets_resolves_paths(toy10, tmp_path, toy10_alignments, toy10_lexicon, small_editor, loaded_specs):
    job = make_job(
        toy10,
        toy10_alignments,
        toy10_lexicon,
        small_editor,
        loaded_specs[:2],
        RecipeKind.TTS,
        tmp_path / "pathbase",
    )
    aug = augpipe.build_augmentation_set(job).manifest
    _, manifest = toy10
    mixed = augpipe.mix_sets(aug, manifest, 1.0, seed=1)
    for utt in mixed.entries:
        ref = utt.audio or utt.feats
        assert ref is not None
        from pathlib import Path

        assert Path(ref).is_absolute()
        assert Path(ref).exists()
