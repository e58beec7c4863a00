use std::path::Path;

use crate::decoding::beam_translate;
use crate::editops::{apply_edits, derive_edits, EditScript};
use crate::seqmodel::{Example, Model};
use crate::textproc::{fix_punctuation, merge_german};
use crate::{Error, Result};

use super::data::{german_split, load_raw, DatasetSpec, ImageFeatureStore, RawExample, TaskKind, Vocabularies};
use super::train::{load_checkpoint, CheckpointMeta};

/// Decoded ids as target tokens; post-editing applies the script to the
/// (split) MT stream.
pub fn ids_to_output(task: TaskKind, vocabs: &Vocabularies, raw: &RawExample, ids: &[usize]) -> Result<Vec<String>> {
    match task {
        TaskKind::Ape => {
            let script = EditScript::decode(ids, &vocabs.target)?;
            Ok(apply_edits(&raw.sources[1], &script))
        }
        _ => vocabs.target.decode(ids),
    }
}

/// Undo German splitting, then fix punctuation. Post-editing always runs
/// the punctuation fixes with the MT line as reference; other tasks only
/// when they were trained on split text.
pub fn finish_output(meta: &CheckpointMeta, raw: &RawExample, out: Vec<String>) -> Vec<String> {
    let out = if meta.split_german { merge_german(&out) } else { out };
    match (meta.task, &raw.mt) {
        (TaskKind::Ape, mt) => fix_punctuation(&out, mt.as_deref()),
        _ if meta.split_german => fix_punctuation(&out, None),
        _ => out,
    }
}

fn worker_count(items: usize) -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(items).max(1)
}

/// Beam-decode every example; sentences are independent, so they are split
/// over threads without affecting the result.
pub fn decode_examples(
    model: &Model<f32>,
    meta: &CheckpointMeta,
    vocabs: &Vocabularies,
    raw: &[RawExample],
    beam: usize,
    max_len: usize,
) -> Result<Vec<Vec<String>>> {
    let examples: Vec<Example> = raw.iter().map(|r| vocabs.encode(meta.task, r)).collect::<Result<_>>()?;
    let one = |i: usize| -> Result<Vec<String>> {
        let ex = &examples[i];
        let srcs: Vec<&[usize]> = ex.sources.iter().map(Vec::as_slice).collect();
        let ids = beam_translate(model, &srcs, ex.image.as_deref(), beam, max_len)?;
        let out = ids_to_output(meta.task, vocabs, &raw[i], &ids)?;
        Ok(finish_output(meta, &raw[i], out))
    };
    let workers = worker_count(raw.len());
    let chunk = raw.len().div_ceil(workers).max(1);
    let parts: Vec<Result<Vec<Vec<String>>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..raw.len())
            .step_by(chunk)
            .map(|start| {
                let one = &one;
                scope.spawn(move || (start..(start + chunk).min(raw.len())).map(one).collect())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("decode worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(raw.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Translate (or post-edit) the inputs of `spec` with a trained checkpoint.
/// The spec's target, if any, is ignored; its German toggle is taken from
/// the checkpoint.
pub fn translate(checkpoint: &Path, spec: &DatasetSpec, beam: usize, max_len: usize) -> Result<Vec<Vec<String>>> {
    let (model, meta) = load_checkpoint(checkpoint)?;
    if spec.task != meta.task {
        return Err(Error::usage(format!("checkpoint was trained for {}, not {}", meta.task, spec.task)));
    }
    if spec.sources.len() != meta.source_vocabs.len() {
        return Err(Error::usage(format!(
            "checkpoint expects {} input streams, got {}",
            meta.source_vocabs.len(),
            spec.sources.len()
        )));
    }
    if spec.images.is_some() != meta.uses_image {
        return Err(Error::usage(if meta.uses_image {
            "checkpoint expects image features"
        } else {
            "checkpoint was trained without image features"
        }));
    }
    let store = match &spec.images {
        Some(src) => {
            let store = ImageFeatureStore::load(&src.features, &src.index)?;
            if Some(store.dim()) != model.config().image_dim {
                return Err(Error::usage(format!(
                    "image features have {} dimensions, checkpoint expects {:?}",
                    store.dim(),
                    model.config().image_dim
                )));
            }
            Some(store)
        }
        None => None,
    };
    let mut inputs = spec.clone();
    inputs.target = None;
    inputs.split_german = meta.split_german;
    let raw = load_raw(&inputs, store.as_ref())?;
    let vocabs = meta.vocabularies()?;
    decode_examples(&model, &meta, &vocabs, &raw, beam, max_len)
}

/// Edit scripts from MT to post-edit, line by line.
pub fn ape_derive(mt: &[Vec<String>], pe: &[Vec<String>], split: bool) -> Result<Vec<EditScript>> {
    if mt.len() != pe.len() {
        return Err(Error::Dataset(format!("{} MT lines but {} post-edits", mt.len(), pe.len())));
    }
    Ok(mt
        .iter()
        .zip(pe)
        .map(|(m, p)| {
            if split {
                derive_edits(&german_split(m), &german_split(p))
            } else {
                derive_edits(m, p)
            }
        })
        .collect())
}

/// Apply scripts to MT lines with the same post-processing as decoding:
/// apply, merge German splits, fix punctuation against the MT line.
pub fn ape_apply(mt: &[Vec<String>], scripts: &[EditScript], split: bool) -> Result<Vec<Vec<String>>> {
    if mt.len() != scripts.len() {
        return Err(Error::Dataset(format!("{} MT lines but {} scripts", mt.len(), scripts.len())));
    }
    Ok(mt
        .iter()
        .zip(scripts)
        .map(|(m, s)| {
            let out = if split { merge_german(&apply_edits(&german_split(m), s)) } else { apply_edits(m, s) };
            fix_punctuation(&out, Some(m))
        })
        .collect())
}
