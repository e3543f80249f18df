"""
titleskills CLI interface
Preprocess postings, train the title/skills encoder, build the title index, search and evaluate
"""
import json
from pathlib import Path

import click

from src.models.embedding import Mode
from src.models.records import JobRecord, RecordRejected
from src.services.corpus_service import (
    SynthConfig, compute_stats, generate_synthetic, load_benchmark, load_records, preprocess,
    to_training_pairs, write_benchmark,
)
from src.services.encoder_service import DualEncoder, StaticBaseline, init_params, load_checkpoint
from src.services.eval_service import RecallTriple, compare_encoders, default_labels, render_table
from src.services.index_service import build_index_for, load_index, query, save_index
from src.services.skill_service import Gazetteer
from src.services.tokenizer_service import build_vocab, load_vocab, save_vocab
from src.services.training_service import train as run_training
from src.services.training_service import vocabulary_texts
from src.utils.config import Config, RunConfig
from src.utils.errors import ConfigError, TitleSkillsError
from src.utils.files import atomic_write_text, write_lock
from src.utils.logging import get_logger, setup_logging

logger = get_logger(__name__)

MODE_CHOICES = [mode.value for mode in Mode]


def _default(name):
    """Shown default of a RunConfig-backed flag"""
    value = getattr(RunConfig, name)
    return 'none' if value is None else str(value)


class PipelineGroup(click.Group):
    """Turns library errors into one-line messages and their exit codes"""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except TitleSkillsError as e:
            click.echo(f"❌ {type(e).__name__}: {e}", err=True)
            ctx.exit(e.exit_code)


def _run_config(ctx, **overrides) -> RunConfig:
    return ctx.obj['config'].with_overrides(**overrides)


def _load_encoder(config: RunConfig, checkpoint_path=None, name=None):
    vocab = load_vocab(config.require_path('vocab_path'))
    path = Path(checkpoint_path) if checkpoint_path else config.require_path('checkpoint_path')
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    params = load_checkpoint(path, vocab)
    return DualEncoder(params, vocab, name=name or path.stem), vocab


def _encoder_names(paths):
    """Checkpoint stems, or the full paths where stems collide"""
    paths = [str(p) for p in paths]
    if len(set(paths)) != len(paths):
        raise ConfigError("the same --checkpoint was given more than once")
    stems = [Path(p).stem for p in paths]
    return [stem if stems.count(stem) == 1 else path for stem, path in zip(stems, paths)]


@click.group(cls=PipelineGroup)
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None, show_default='none',
              help='Flat key = value run configuration file')
@click.option('--data-seed', type=int, default=None, show_default=_default('data_seed'),
              help='Seed for synthetic data, shuffling and validation split')
@click.option('--model-seed', type=int, default=None, show_default=_default('model_seed'),
              help='Seed for weight initialization, dropout and the static baseline')
@click.option('--quiet', is_flag=True, default=False, show_default=True, help='Only log warnings and errors')
@click.pass_context
def cli(ctx, config_path, data_seed, model_seed, quiet):
    """titleskills - job title normalization with a title/skills dual encoder"""
    env = Config()
    setup_logging(env.LOG_LEVEL, logs_dir=env.LOGS_PATH if env.LOG_TO_FILE else None, quiet=quiet)
    run_config = RunConfig.from_file(config_path) if config_path else RunConfig()
    ctx.ensure_object(dict)
    run_config = run_config.under(env.DATA_PATH)
    ctx.obj['config'] = run_config.with_overrides(data_seed=data_seed, model_seed=model_seed)


@cli.command()
@click.option('--out', type=click.Path(dir_okay=False), default='data/synthetic.jsonl', show_default=True,
              help='Output JSONL file')
@click.option('--families', type=int, default=10, show_default=True, help='Occupation families')
@click.option('--skills-per-family', type=int, default=8, show_default=True, help='Skill pool per family')
@click.option('--records-per-family', type=int, default=20, show_default=True, help='Postings per family')
@click.option('--skills-per-record', type=int, default=None, show_default='skills-per-family',
              help='Skills drawn per posting')
@click.option('--noise', type=float, default=0.0, show_default=True,
              help='Probability of swapping a skill for one from another family')
@click.option('--ambiguous-pairs', type=int, default=0, show_default=True,
              help='Family pairs that share one title variant')
@click.option('--modifier-rate', type=float, default=0.5, show_default=True,
              help='Probability of a seniority or arrangement modifier on a title')
@click.pass_context
def synth(ctx, out, families, skills_per_family, records_per_family, skills_per_record, noise,
          ambiguous_pairs, modifier_rate):
    """Generate a labelled synthetic posting corpus"""
    config = _run_config(ctx)
    synth_config = SynthConfig(
        families=families,
        skills_per_family=skills_per_family,
        records_per_family=records_per_family,
        skills_per_record=skills_per_record,
        noise=noise,
        ambiguous_pairs=ambiguous_pairs,
        modifier_rate=modifier_rate,
    )
    records = generate_synthetic(synth_config, config.data_seed)
    with write_lock(out):
        write_benchmark(records, out)
    click.echo(f"✅ Wrote {len(records)} synthetic postings to {out}")


@cli.command(name='preprocess')
@click.argument('input_path', type=click.Path(dir_okay=False))
@click.argument('output_path', type=click.Path(dir_okay=False))
@click.option('--gazetteer', type=click.Path(dir_okay=False), default=None, show_default='shipped gazetteer',
              help='Skill lexicon, one entry per line')
@click.pass_context
def preprocess_cmd(ctx, input_path, output_path, gazetteer):
    """Clean postings, drop non-English ones, extract skills and deduplicate"""
    config = _run_config(ctx, gazetteer_path=gazetteer)
    if not Path(input_path).exists():
        raise ConfigError(f"input not found: {input_path}")
    lexicon = Gazetteer.from_file(config.require_path('gazetteer_path')) if config.gazetteer_path \
        else Gazetteer.default()
    loaded = load_records(input_path)
    kept, summary = preprocess(loaded.records, lexicon)
    with write_lock(output_path):
        write_benchmark(kept, output_path)

    click.echo(f"📥 Read: {summary.read}")
    click.echo(f"✅ Kept: {summary.kept}")
    click.echo(f"🌐 Dropped by language: {summary.dropped_language}")
    click.echo(f"🕳️ Dropped empty: {summary.dropped_empty}")
    click.echo(f"🔁 Dropped duplicates: {summary.dropped_duplicate}")
    if loaded.malformed:
        click.echo(f"⚠️ Skipped {len(loaded.malformed)} malformed lines")
    if loaded.rejected:
        click.echo(f"🚫 Rejected records: {loaded.rejected}")


@cli.command()
@click.argument('input_path', type=click.Path(dir_okay=False))
@click.option('--out', type=click.Path(dir_okay=False), default=None, show_default='stdout only',
              help='Also write the stats JSON here')
def stats(input_path, out):
    """Print corpus statistics as JSON"""
    if not Path(input_path).exists():
        raise ConfigError(f"input not found: {input_path}")
    payload = json.dumps(compute_stats(load_records(input_path).records).to_dict(), indent=2, ensure_ascii=False)
    if out:
        with write_lock(out):
            atomic_write_text(out, payload + '\n')
    click.echo(payload)


@cli.command()
@click.option('--corpus', default=None, show_default=_default('corpus_path'), help='Preprocessed JSONL corpus')
@click.option('--vocab', default=None, show_default=_default('vocab_path'), help='Vocabulary file')
@click.option('--checkpoint', default=None, show_default=_default('checkpoint_path'), help='Checkpoint file')
@click.option('--log', 'log_path', default=None, show_default=_default('log_path'), help='Training log JSONL')
@click.option('--resume', is_flag=True, default=False, show_default=True,
              help='Continue from the checkpoint and its training state')
@click.option('--min-frequency', type=int, default=None, show_default=_default('min_frequency'))
@click.option('--batch-size', type=int, default=None, show_default=_default('batch_size'))
@click.option('--epochs', type=int, default=None, show_default=_default('epochs'))
@click.option('--learning-rate', type=float, default=None, show_default=_default('learning_rate'))
@click.option('--scale', type=float, default=None, show_default=_default('scale'))
@click.option('--weight-decay', type=float, default=None, show_default=_default('weight_decay'))
@click.option('--validation-fraction', type=float, default=None, show_default=_default('validation_fraction'))
@click.option('--checkpoint-every', type=int, default=None, show_default=_default('checkpoint_every'))
@click.option('--bidirectional/--no-bidirectional', default=None, show_default=_default('bidirectional'),
              help='Also rank titles for each skill list')
@click.option('--hidden-dim', type=int, default=None, show_default=_default('hidden_dim'))
@click.option('--num-layers', type=int, default=None, show_default=_default('num_layers'))
@click.option('--num-heads', type=int, default=None, show_default=_default('num_heads'))
@click.option('--pooled-dim', type=int, default=None, show_default=_default('pooled_dim'))
@click.option('--max-positions', type=int, default=None, show_default=_default('max_positions'))
@click.option('--dropout', type=float, default=None, show_default=_default('dropout_rate'))
@click.pass_context
def train(ctx, corpus, vocab, checkpoint, log_path, resume, min_frequency, batch_size, epochs, learning_rate,
          scale, weight_decay, validation_fraction, checkpoint_every, bidirectional, hidden_dim, num_layers,
          num_heads, pooled_dim, max_positions, dropout):
    """Train the dual encoder on (title, skills) pairs"""
    config = _run_config(
        ctx, corpus_path=corpus, vocab_path=vocab, checkpoint_path=checkpoint, log_path=log_path,
        min_frequency=min_frequency, batch_size=batch_size, epochs=epochs, learning_rate=learning_rate,
        scale=scale, weight_decay=weight_decay, validation_fraction=validation_fraction,
        checkpoint_every=checkpoint_every, bidirectional=bidirectional, hidden_dim=hidden_dim,
        num_layers=num_layers, num_heads=num_heads, pooled_dim=pooled_dim, max_positions=max_positions,
        dropout_rate=dropout,
    )
    train_config = config.train_config()
    pairs = to_training_pairs(load_records(config.require_path('corpus_path')).records)

    with write_lock(config.checkpoint_path):
        if resume:
            vocabulary = load_vocab(config.require_path('vocab_path'))
            params = load_checkpoint(config.require_path('checkpoint_path'), vocabulary)
        else:
            vocabulary = build_vocab(vocabulary_texts(pairs), config.min_frequency)
            save_vocab(vocabulary, config.vocab_path)
            params = init_params(config.encoder_config(len(vocabulary)))
        click.echo(f"🧠 Training on {len(pairs)} pairs with a vocabulary of {len(vocabulary)} tokens")
        params, log = run_training(
            params, pairs, vocabulary, train_config,
            checkpoint_path=config.checkpoint_path, log_path=config.log_path, resume=resume,
        )

    click.echo(f"📉 Loss: {log.initial_mean_loss:.4f} → {log.final_mean_loss:.4f}")
    if log.validations:
        last = log.validations[-1]
        click.echo(f"📊 Validation loss {last['val_loss']:.4f}, Recall@1 {last['val_recall_at_1']:.3f}")
    click.echo(f"✅ Checkpoint written to {config.checkpoint_path}")


@cli.command()
@click.argument('input_path', type=click.Path(dir_okay=False))
@click.argument('output_path', type=click.Path(dir_okay=False))
@click.option('--checkpoint', default=None, show_default=_default('checkpoint_path'))
@click.option('--vocab', default=None, show_default=_default('vocab_path'))
@click.option('--mode', type=click.Choice(MODE_CHOICES), default=None, show_default=_default('mode'))
@click.pass_context
def embed(ctx, input_path, output_path, checkpoint, vocab, mode):
    """Write one embedding per posting as JSONL"""
    config = _run_config(ctx, checkpoint_path=checkpoint, vocab_path=vocab, mode=mode)
    if not Path(input_path).exists():
        raise ConfigError(f"input not found: {input_path}")
    encoder, _ = _load_encoder(config)
    records = load_records(input_path).records
    embeddings = encoder.embed_many(records, config.mode)
    lines = [
        json.dumps({'title': r.title, 'mode': e.mode.value, 'embedding': e.values.tolist()}, ensure_ascii=False)
        for r, e in zip(records, embeddings)
    ]
    with write_lock(output_path):
        atomic_write_text(output_path, ''.join(f"{line}\n" for line in lines))
    click.echo(f"✅ Embedded {len(lines)} postings in {config.mode} mode")


def _read_labels(path):
    try:
        lines = Path(path).read_text(encoding='utf-8').splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read labels {path}: {e}") from e
    return [line.strip() for line in lines if line.strip()]


@cli.command(name='index')
@click.option('--labels', 'labels_path', type=click.Path(dir_okay=False), default=None,
              show_default='benchmark normalized titles', help='Label file, one normalized title per line')
@click.option('--benchmark', default=None, show_default=_default('benchmark_path'))
@click.option('--checkpoint', default=None, show_default=_default('checkpoint_path'))
@click.option('--vocab', default=None, show_default=_default('vocab_path'))
@click.option('--out', default=None, show_default=_default('index_path'))
@click.pass_context
def index_cmd(ctx, labels_path, benchmark, checkpoint, vocab, out):
    """Embed the normalized-title taxonomy into a search index"""
    config = _run_config(ctx, benchmark_path=benchmark, checkpoint_path=checkpoint, vocab_path=vocab,
                         index_path=out)
    if labels_path:
        labels = _read_labels(labels_path)
    else:
        labels = default_labels(load_benchmark(config.require_path('benchmark_path')))
    encoder, _ = _load_encoder(config)
    index = build_index_for(encoder, labels)
    with write_lock(config.index_path):
        save_index(index, config.index_path)
    click.echo(f"✅ Indexed {len(index)} labels to {config.index_path}")


@cli.command()
@click.argument('query_title')
@click.option('--skills', default=None, show_default='none, title mode',
              help='Comma-separated skills; switches to combined mode')
@click.option('--k', type=int, default=None, show_default=_default('k'), help='Number of results')
@click.option('--checkpoint', default=None, show_default=_default('checkpoint_path'))
@click.option('--vocab', default=None, show_default=_default('vocab_path'))
@click.option('--index', 'index_path', default=None, show_default=_default('index_path'))
@click.option('--force', is_flag=True, default=False, show_default=True,
              help='Search an index built with another checkpoint')
@click.pass_context
def search(ctx, query_title, skills, k, checkpoint, vocab, index_path, force):
    """Rank normalized titles for a free-form job title"""
    config = _run_config(ctx, k=k, checkpoint_path=checkpoint, vocab_path=vocab, index_path=index_path)
    if config.k < 1:
        raise ConfigError(f"k must be at least 1, got {config.k}")
    encoder, _ = _load_encoder(config)
    index = load_index(
        config.require_path('index_path'),
        expected_dim=encoder.dim,
        expected_fingerprint=encoder.fingerprint,
        override=force,
    )
    skill_list = [s.strip() for s in (skills or '').split(',') if s.strip()]
    try:
        record = JobRecord(title=query_title, skills=tuple(skill_list))
    except RecordRejected as e:
        raise click.BadParameter(str(e), param_hint='QUERY_TITLE')
    mode = Mode.COMBINED if skill_list else Mode.TITLE
    result = query(index, encoder.embed(record, mode), config.k)
    for rank, hit in enumerate(result, start=1):
        click.echo(f"{rank}\t{hit.score:.4f}\t{hit.label}")


@cli.command()
@click.option('--benchmark', default=None, show_default=_default('benchmark_path'), help='Benchmark JSONL')
@click.option('--checkpoint', 'checkpoints', multiple=True, show_default=_default('checkpoint_path'),
              help='Checkpoint to evaluate (repeatable)')
@click.option('--vocab', default=None, show_default=_default('vocab_path'))
@click.option('--static-baseline', is_flag=True, default=False, show_default=True,
              help='Also evaluate the seeded random static-embedding baseline')
@click.option('--modes', default='title,combined', show_default=True, help='Comma-separated inference modes')
@click.option('--reference', 'references', multiple=True, show_default='none',
              help='Published recall constants "r1,r5,r10" (repeatable)')
@click.option('--reference-name', 'reference_names', multiple=True, show_default='reference-N',
              help='Row name for each --reference, in order')
@click.option('--report-dir', default=None, show_default=_default('report_dir'))
@click.option('--k', type=int, default=None, show_default=_default('k'))
@click.option('--per-family', is_flag=True, default=False, show_default=True,
              help='Add Recall@1 per ESCO family to the report')
@click.pass_context
def evaluate(ctx, benchmark, checkpoints, vocab, static_baseline, modes, references, reference_names,
             report_dir, k, per_family):
    """Compare encoders on a benchmark and write the report"""
    config = _run_config(ctx, benchmark_path=benchmark, vocab_path=vocab, report_dir=report_dir, k=k)
    records = load_benchmark(config.require_path('benchmark_path'))
    mode_list = [m.strip() for m in modes.split(',') if m.strip()]
    for mode in mode_list:
        if mode not in MODE_CHOICES:
            raise ConfigError(f"unknown mode {mode!r}; expected one of {', '.join(MODE_CHOICES)}")
    if len(reference_names) > len(references):
        raise ConfigError("more --reference-name values than --reference values")

    encoders = []
    vocabulary = None
    paths = checkpoints or (config.checkpoint_path,)
    for path, name in zip(paths, _encoder_names(paths)):
        encoder, vocabulary = _load_encoder(config, path, name=name)
        encoders.append(encoder)
    if static_baseline:
        vocabulary = vocabulary or load_vocab(config.require_path('vocab_path'))
        dim = encoders[0].dim if encoders else config.pooled_dim
        encoders.append(StaticBaseline(vocabulary, dim, seed=config.model_seed))

    reference_rows = {}
    for position, text in enumerate(references):
        name = reference_names[position] if position < len(reference_names) else f"reference-{position + 1}"
        reference_rows[name] = RecallTriple.parse(text)

    report = compare_encoders(
        records, encoders, mode_list, references=reference_rows, k=config.k, per_family=per_family,
        dataset_name=Path(config.benchmark_path).stem,
        config={'data_seed': config.data_seed, 'model_seed': config.model_seed, 'k': config.k},
    )
    table = render_table(report)
    out_dir = Path(config.report_dir)
    with write_lock(out_dir / 'evaluation.json'):
        atomic_write_text(out_dir / 'evaluation.json', report.to_json() + '\n')
        atomic_write_text(out_dir / 'evaluation.txt', table)
    click.echo(table, nl=False)
    logger.info("report written", report_dir=str(out_dir))


if __name__ == '__main__':
    cli()
