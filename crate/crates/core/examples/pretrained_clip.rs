//! Scores one image against the audit prompts with a local CLIP checkpoint
//! (a directory with `config.json`, `model.safetensors`, `tokenizer.json`)
//! and renders Grad-CAM for a question.
//!
//!     cargo run --release --features pretrained --example pretrained_clip -- CHECKPOINT_DIR IMAGE [QUESTION]

use vlaudit::analysis::cosine;
use vlaudit::encoder::{encode_texts, EmbeddingVector, Encoder, ImageInput, PretrainedBackend};
use vlaudit::lexicon::{build_prompts, builtin_lexicon};
use vlaudit::saliency::{answer_region, grad_cam, write_saliency_artifacts, GradCamOptions, Question};
use vlaudit::geometry::PixelRect;
use vlaudit::AuditError;

fn main() -> vlaudit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [checkpoint, image_path, rest @ ..] = args.as_slice() else {
        return Err(AuditError::Config("usage: pretrained_clip CHECKPOINT_DIR IMAGE [QUESTION]".into()));
    };
    let question = rest.first().map(String::as_str).unwrap_or("What is the person wearing?");

    let backend = PretrainedBackend::load(checkpoint)?;
    println!("{} ({} layers, dim {})", backend.info().name, backend.layers(), backend.info().dim);

    let bytes = std::fs::read(image_path).map_err(|e| AuditError::io(image_path, e))?;
    let image = ImageInput::from_bytes("input", bytes)?;
    let iv = EmbeddingVector::normalized(backend.embed_image(&image)?)?;

    let prompts = build_prompts(builtin_lexicon().keywords(), "An image of ")?;
    let texts = encode_texts(&backend, &prompts)?;
    let mut scored: Vec<(f64, &str)> = prompts
        .iter()
        .map(|p| Ok((cosine(&iv, texts.get(p.id()).expect("encoded"))?, p.id())))
        .collect::<vlaudit::Result<_>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (s, k) in scored.iter().take(8) {
        println!("{s:.4}  {k}");
    }

    let map = grad_cam(&backend, &image, &Question::new(question)?, &GradCamOptions::default())?;
    let answer = answer_region(&map, &PixelRect::quadrants(map.width, map.height))?;
    let out = std::env::temp_dir().join("vlaudit-clip");
    for p in write_saliency_artifacts(&out, &image, &map, Some(&answer), 0.5)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
