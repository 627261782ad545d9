use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use vog_core::checkpoint::Checkpoint;
use vog_core::corpus::{
    dedup_subtitles, generate_synthetic_articles, generate_synthetic_corpus, parse_videos, read_annotations,
    read_articles, spans_to_tags, write_annotations, write_articles, write_subtitles, SynthConfig, TokenSequence,
    VideoDocument,
};
use vog_core::encoder::EncoderConfig;
use vog_core::eval::{evaluate_corpus, RougeAggregation};
use vog_core::extraction::{read_predictions, write_predictions, ModelVariant};
use vog_core::rewriter::{build_edit_examples, RewriteMode};
use vog_core::training::{
    annotations_by_video, pretrain_heading_detector, rewrite_pairs, train_extractor, train_rewriter, TrainConfig,
};
use vog_core::{Error, Result};

use crate::{
    Command, EncoderArgs, EvaluateArgs, IngestArgs, PredictArgs, PretrainArgs, SynthArgs, TrainArgs,
    TrainExtractorArgs, TrainRewriterArgs,
};

pub fn run(command: Command) -> Result<String> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::Pretrain(a) => pretrain(a),
        Command::TrainExtractor(a) => train_extractor_cmd(a),
        Command::TrainRewriter(a) => train_rewriter_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn encoder_config(args: &EncoderArgs) -> Result<EncoderConfig> {
    let config = EncoderConfig {
        vocab_size: 2,
        model_dim: args.dim,
        layers: args.layers,
        heads: args.heads,
        ff_dim: args.ff_dim,
        max_positions: args.max_len,
        dropout: args.dropout,
    };
    config.validate()?;
    Ok(config)
}

fn train_config(args: &TrainArgs, mut config: TrainConfig) -> Result<TrainConfig> {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        config.apply_text(&text)?;
    }
    let overrides = [
        ("batch_size", args.batch_size.map(|v| v.to_string())),
        ("epochs", args.epochs.map(|v| v.to_string())),
        ("max_steps", args.max_steps.map(|v| v.to_string())),
        ("warmup_steps", args.warmup_steps.map(|v| v.to_string())),
        ("learning_rate", args.learning_rate.map(|v| v.to_string())),
        ("crf_learning_rate", args.crf_learning_rate.map(|v| v.to_string())),
        ("weight_decay", args.weight_decay.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("grad_clip", args.grad_clip.map(|v| v.to_string())),
        ("schedule", args.schedule.clone()),
    ];
    for (key, value) in overrides {
        if let Some(value) = value {
            config.set(key, &value)?;
        }
    }
    config.validate()?;
    Ok(config)
}

fn fmt_loss(loss: Option<f64>) -> String {
    loss.map_or_else(|| "none".into(), |l| format!("{l:.6}"))
}

fn ingest(args: IngestArgs) -> Result<String> {
    create_dir(&args.out_dir)?;
    let mut documents: Vec<VideoDocument> = Vec::new();
    if let Some(path) = &args.subtitles {
        documents = parse_videos(open(path)?)?;
        write(&args.out_dir.join("subtitles.jsonl"), write_subtitles(&documents))?;
    }
    let mut annotation_count = 0;
    if let Some(path) = &args.annotations {
        let annotations = read_annotations(open(path)?)?;
        if args.subtitles.is_some() {
            let by_video = annotations_by_video(&annotations);
            for doc in &documents {
                if let Some(gold) = by_video.get(doc.video_id.as_str()) {
                    let seq = TokenSequence::from_document(&dedup_subtitles(doc), usize::MAX);
                    spans_to_tags(seq.len(), gold)?;
                }
            }
            if let Some(missing) = by_video.keys().find(|id| !documents.iter().any(|d| d.video_id == **id)) {
                return Err(Error::Config(format!("annotations refer to unknown video `{missing}`")));
            }
        }
        annotation_count = annotations.len();
        write(&args.out_dir.join("annotations.jsonl"), write_annotations(&annotations))?;
    }
    let mut article_count = 0;
    if let Some(path) = &args.articles {
        let articles = read_articles(open(path)?)?;
        article_count = articles.len();
        write(&args.out_dir.join("articles.jsonl"), write_articles(&articles))?;
    }
    let boxes: usize = documents.iter().map(|d| d.boxes.len()).sum();
    Ok(format!(
        "ingest: videos={} boxes={boxes} annotations={annotation_count} articles={article_count}",
        documents.len()
    ))
}

fn synth(args: SynthArgs) -> Result<String> {
    let config = SynthConfig {
        videos: args.videos,
        highlight_strength: args.highlight_strength,
        text_signal: args.text_signal == "on",
        filler_rate: args.filler_rate,
        duplicate_rate: args.duplicate_rate,
        id_prefix: args.id_prefix,
        ..SynthConfig::default()
    };
    let videos = generate_synthetic_corpus(&config, args.seed)?;
    create_dir(&args.out_dir)?;
    let documents: Vec<VideoDocument> = videos.iter().map(|v| v.document.clone()).collect();
    let annotations: Vec<_> = videos.iter().flat_map(|v| v.annotations.iter().cloned()).collect();
    write(&args.out_dir.join("subtitles.jsonl"), write_subtitles(&documents))?;
    write(&args.out_dir.join("annotations.jsonl"), write_annotations(&annotations))?;
    if args.articles > 0 {
        let articles = generate_synthetic_articles(&config, args.articles, args.seed)?;
        write(&args.out_dir.join("articles.jsonl"), write_articles(&articles))?;
    }
    let boxes: usize = documents.iter().map(|d| d.boxes.len()).sum();
    Ok(format!(
        "synth: videos={} boxes={boxes} outlines={} articles={} seed={}",
        documents.len(),
        annotations.len(),
        args.articles,
        args.seed
    ))
}

fn pretrain(args: PretrainArgs) -> Result<String> {
    let articles = read_articles(open(&args.articles)?)?;
    let extra: String = match &args.subtitles {
        Some(path) => parse_videos(open(path)?)?
            .iter()
            .flat_map(|d| d.boxes.iter().flat_map(|b| b.text.chars()))
            .collect(),
        None => String::new(),
    };
    let encoder = encoder_config(&args.encoder)?;
    let config = train_config(&args.train, TrainConfig::default())?;
    let (model, report) = pretrain_heading_detector(&articles, &encoder, &extra, &config)?;
    Checkpoint::from(&model).save(&args.out)?;
    Ok(format!(
        "pretrain: articles={} examples={} steps={} first_loss={} final_loss={}",
        articles.len(),
        report.examples,
        report.steps,
        fmt_loss(report.first_loss()),
        fmt_loss(report.last_loss())
    ))
}

fn train_extractor_cmd(args: TrainExtractorArgs) -> Result<String> {
    let variant = ModelVariant::from_name(&args.variant)?;
    let documents = parse_videos(open(&args.subtitles)?)?;
    let annotations = read_annotations(open(&args.annotations)?)?;
    let init = args
        .init
        .as_deref()
        .map(|p| Checkpoint::load(p)?.into_pretrained())
        .transpose()?;
    let encoder = encoder_config(&args.encoder)?;
    let config = train_config(&args.train, TrainConfig::default())?;
    let (extractor, report) = train_extractor(&documents, &annotations, &variant, &encoder, &config, init.as_ref())?;
    Checkpoint::from(&extractor).save(&args.out)?;
    let mut summary = format!(
        "train-extractor: variant={} examples={} steps={} final_loss={}",
        variant.name,
        report.examples,
        report.steps,
        fmt_loss(report.last_loss())
    );
    if let (Some(subs), Some(gold)) = (&args.eval_subtitles, &args.eval_annotations) {
        let held_out = parse_videos(open(subs)?)?;
        let gold = read_annotations(open(gold)?)?;
        let predictions = extractor.predict_corpus(&held_out, None)?;
        let r = evaluate_corpus(&predictions, &gold, RougeAggregation::Macro);
        summary.push_str(&format!(" heldout_seg_f1={} heldout_overall={}", r.seg_f1, r.overall));
    }
    Ok(summary)
}

fn train_rewriter_cmd(args: TrainRewriterArgs) -> Result<String> {
    let mode: RewriteMode = args.mode.parse()?;
    let documents = parse_videos(open(&args.subtitles)?)?;
    let annotations = read_annotations(open(&args.annotations)?)?;
    let encoder = encoder_config(&args.encoder)?;
    let pairs = rewrite_pairs(&documents, &annotations, encoder.max_positions);
    let edits = build_edit_examples(pairs.iter().map(|(s, t)| (s.as_str(), t.as_str())));
    let config = train_config(&args.train, TrainConfig::rewriter())?;
    let (rewriter, report) = train_rewriter(&edits, mode, &encoder, &config)?;
    Checkpoint::from(&rewriter).save(&args.out)?;
    Ok(format!(
        "train-rewriter: mode={mode} examples={} excluded={} steps={} final_loss={}",
        edits.examples.len(),
        edits.excluded,
        report.steps,
        fmt_loss(report.last_loss())
    ))
}

fn predict(args: PredictArgs) -> Result<String> {
    let extractor = Checkpoint::load(&args.model)?.into_extractor()?;
    let mode: RewriteMode = args.rewrite.parse()?;
    let rewriter = match (mode, &args.rewriter) {
        (RewriteMode::Off, None) => None,
        (RewriteMode::Off, Some(_)) => {
            return Err(Error::Config("--rewriter given with --rewrite off".into()));
        }
        (_, None) => return Err(Error::Config(format!("--rewrite {mode} needs --rewriter"))),
        (_, Some(path)) => {
            let r = Checkpoint::load(path)?.into_rewriter()?;
            if r.mode != mode {
                return Err(Error::Config(format!("rewriter checkpoint is `{}`, not `{mode}`", r.mode)));
            }
            Some(r)
        }
    };
    let documents = parse_videos(open(&args.subtitles)?)?;
    let predictions = extractor.predict_corpus(&documents, rewriter.as_ref())?;
    write(&args.out, write_predictions(&predictions))?;
    Ok(format!(
        "predict: variant={} videos={} outlines={} rewrite={mode}",
        extractor.variant.name,
        documents.len(),
        predictions.len()
    ))
}

fn evaluate(args: EvaluateArgs) -> Result<String> {
    let predictions = read_predictions(open(&args.predictions)?)?;
    let gold = read_annotations(open(&args.annotations)?)?;
    let aggregation = match args.rouge.as_str() {
        "micro" => RougeAggregation::Micro,
        _ => RougeAggregation::Macro,
    };
    let r = evaluate_corpus(&predictions, &gold, aggregation);
    if let Some(path) = &args.out {
        write(path, r.to_json() + "\n")?;
    }
    Ok(format!(
        "{}evaluate: seg_p={} seg_r={} seg_f1={} rouge_p={} rouge_r={} rouge_f05={} overall={} matched={} predicted={} gold={} scored={}",
        r.table(),
        r.seg_precision,
        r.seg_recall,
        r.seg_f1,
        r.rouge_p,
        r.rouge_r,
        r.rouge_f05,
        r.overall,
        r.matched_points,
        r.predicted_points,
        r.gold_points,
        r.scored_headings
    ))
}
