"""
Training Service - in-batch negatives ranking loss, optimizer and training loop
"""
import copy
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from src.models.embedding import Embedding, Mode
from src.models.encoder import SkillEncoder
from src.models.records import JobRecord
from src.services.corpus_service import TrainingPair
from src.services.encoder_service import DualEncoder, encode_batch, save_checkpoint
from src.services.eval_service import recall_at_n
from src.services.index_service import build_index_for, query
from src.services.tokenizer_service import NUM_SPECIAL, EncodedInput, Vocabulary, encode_skills, encode_title
from src.utils.errors import (
    DatasetTooSmall, DimensionMismatch, InvalidConfig, IoFailure, NonFiniteGradient,
    NonPositiveScale, NotNormalized, ShapeMismatch,
)
from src.utils.files import atomic_write_text, read_bytes
from src.utils.logging import get_logger

logger = get_logger(__name__)

NORM_TOLERANCE = 1e-5
LOSS_WINDOW = 0.1
# decayed by hand from row NUM_SPECIAL on; the AdamW groups leave embeddings undecayed
DECAYED_TOKEN_TABLE = 'token_embeddings.weight'


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 1
    learning_rate: float = 1e-3
    scale: float = 20.0
    weight_decay: float = 0.01
    shuffle_seed: int = 0
    validation_fraction: float = 0.05
    checkpoint_every: int = 100
    bidirectional: bool = False

    def validate(self):
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be positive, got {self.epochs}")
        if self.learning_rate < 0:
            raise InvalidConfig(f"learning_rate must be non-negative, got {self.learning_rate}")
        if not self.scale > 0:
            raise NonPositiveScale(f"scale must be positive, got {self.scale}")
        if self.weight_decay < 0:
            raise InvalidConfig(f"weight_decay must be non-negative, got {self.weight_decay}")
        if not 0.0 < self.validation_fraction < 0.5:
            raise InvalidConfig(f"validation_fraction must be in (0, 0.5), got {self.validation_fraction}")
        if self.checkpoint_every < 1:
            raise InvalidConfig(f"checkpoint_every must be positive, got {self.checkpoint_every}")
        return self


@dataclass
class TrainLog:
    steps: List[dict] = field(default_factory=list)
    validations: List[dict] = field(default_factory=list)

    def add_step(self, step: int, loss: float, seconds: float):
        if self.steps and step <= self.steps[-1]['step']:
            raise ValueError(f"step {step} does not follow step {self.steps[-1]['step']}")
        self.steps.append({'step': step, 'loss': loss, 'seconds': seconds})

    def add_validation(self, step: int, val_loss: float, val_recall_at_1: float):
        self.validations.append({'step': step, 'val_loss': val_loss, 'val_recall_at_1': val_recall_at_1})

    @property
    def losses(self) -> List[float]:
        return [entry['loss'] for entry in self.steps]

    def _window(self) -> int:
        return max(1, int(len(self.steps) * LOSS_WINDOW))

    @property
    def initial_mean_loss(self) -> float:
        window = self.losses[:self._window()]
        return float(np.mean(window)) if window else float('nan')

    @property
    def final_mean_loss(self) -> float:
        window = self.losses[-self._window():]
        return float(np.mean(window)) if window else float('nan')

    def to_jsonl(self) -> str:
        events = [{'event': 'step', **entry} for entry in self.steps]
        events += [{'event': 'validation', **entry} for entry in self.validations]
        events.sort(key=lambda e: (e['step'], e['event'] == 'validation'))
        return ''.join(json.dumps(event) + '\n' for event in events)

    @classmethod
    def from_jsonl(cls, text: str) -> "TrainLog":
        log = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            kind = event.pop('event')
            if kind == 'step':
                log.steps.append(event)
            else:
                log.validations.append(event)
        return log

    def save(self, path):
        atomic_write_text(path, self.to_jsonl())

    @classmethod
    def load(cls, path) -> "TrainLog":
        return cls.from_jsonl(read_bytes(path).decode('utf-8'))

    def until(self, step: int) -> "TrainLog":
        """Events up to and including step"""
        return TrainLog(
            steps=[e for e in self.steps if e['step'] <= step],
            validations=[e for e in self.validations if e['step'] <= step],
        )


# --- loss ---

def _as_matrix(vectors) -> torch.Tensor:
    if isinstance(vectors, torch.Tensor):
        return vectors
    rows = []
    for vector in vectors:
        if isinstance(vector, Embedding):
            if not vector.normalized:
                raise NotNormalized("embedding is not flagged normalized")
            vector = vector.values
        rows.append(np.asarray(vector, dtype=np.float64))
    return torch.from_numpy(np.stack(rows))


def similarity_matrix(titles, skills) -> torch.Tensor:
    """M[i, j] = cosine(title_i, skills_j) for unit-norm rows"""
    titles = _as_matrix(titles)
    skills = _as_matrix(skills)
    if titles.shape[-1] != skills.shape[-1]:
        raise DimensionMismatch(f"title dim {titles.shape[-1]} != skills dim {skills.shape[-1]}")
    if titles.shape[0] != skills.shape[0]:
        raise DimensionMismatch(f"{titles.shape[0]} titles but {skills.shape[0]} skill lists")
    for name, matrix in (('title', titles), ('skills', skills)):
        norms = matrix.detach().norm(dim=1)
        if not torch.all((norms - 1.0).abs() < NORM_TOLERANCE):
            raise NotNormalized(f"{name} embeddings are not unit-norm")
    return titles @ skills.T


def mnr_loss(similarities: torch.Tensor, scale: float, bidirectional: bool = False) -> torch.Tensor:
    """Mean row-wise cross-entropy of softmax(scale * M) against the diagonal"""
    if not scale > 0:
        raise NonPositiveScale(f"scale must be positive, got {scale}")
    loss = _ranking_loss(similarities, scale)
    if bidirectional:
        loss = 0.5 * (loss + _ranking_loss(similarities.T, scale))
    return loss


def _ranking_loss(similarities, scale):
    # loss_i = log(1 + sum_{j != i} exp(z_ij)), z_ij = s (M_ij - M_ii), shifted by m_i = max(0, max_j z_ij)
    batch = similarities.shape[0]
    diagonal = torch.diagonal(similarities)
    z = scale * (similarities - diagonal[:, None])
    eye = torch.eye(batch, dtype=torch.bool, device=similarities.device)
    z = z.masked_fill(eye, float('-inf'))
    shift = z.max(dim=1).values.clamp(min=0.0)
    rest = torch.exp(z - shift[:, None]).sum(dim=1)
    per_row = shift + torch.log1p(rest + torch.exp(-shift) - 1.0)
    return per_row.mean()


def batch_loss(params: SkillEncoder, batch: Sequence[Tuple[EncodedInput, EncodedInput]], config: TrainConfig):
    titles = encode_batch(params, [title for title, _ in batch])
    skills = encode_batch(params, [skills for _, skills in batch])
    return mnr_loss(similarity_matrix(titles, skills), config.scale, config.bidirectional)


def _check_gradients(params, step):
    for name, parameter in params.named_parameters():
        if parameter.grad is not None and not torch.isfinite(parameter.grad).all():
            raise NonFiniteGradient(step, name)


def backward(params: SkillEncoder, batch, config: TrainConfig, step: int = 0):
    """Loss and per-tensor gradients of one batch; params.grad is left populated"""
    if not batch:
        raise DatasetTooSmall("empty batch")
    params.zero_grad(set_to_none=True)
    loss = batch_loss(params, batch, config)
    loss.backward()
    _check_gradients(params, step)
    grads = {}
    for name, parameter in params.named_parameters():
        grad = parameter.grad if parameter.grad is not None else torch.zeros_like(parameter)
        grads[name] = grad.detach().clone()
    return float(loss.detach()), grads


# --- optimizer ---

def build_optimizer(params: torch.nn.Module, config: TrainConfig) -> torch.optim.AdamW:
    """AdamW; biases, norms and the token table go in the undecayed group"""
    decay, no_decay = [], []
    for name, parameter in params.named_parameters():
        # real token rows are decayed by hand in optimizer_step
        if parameter.ndim < 2 or 'norm' in name or name == DECAYED_TOKEN_TABLE:
            no_decay.append(parameter)
        else:
            decay.append(parameter)
    groups = [
        {'params': decay, 'weight_decay': config.weight_decay},
        {'params': no_decay, 'weight_decay': 0.0},
    ]
    return torch.optim.AdamW(
        [g for g in groups if g['params']],
        lr=config.learning_rate, betas=(0.9, 0.999), eps=1e-8,
    )


def optimizer_step(params: torch.nn.Module, grads: Optional[Dict[str, torch.Tensor]],
                   optimizer: torch.optim.Optimizer, config: TrainConfig):
    """One decoupled-decay adaptive update; special-token rows are never decayed"""
    named = dict(params.named_parameters())
    if grads is not None:
        for name, grad in grads.items():
            if name not in named:
                raise ShapeMismatch(f"gradient for unknown tensor {name}")
            if tuple(grad.shape) != tuple(named[name].shape):
                raise ShapeMismatch(
                    f"gradient for {name} has shape {tuple(grad.shape)}, expected {tuple(named[name].shape)}"
                )
            named[name].grad = grad.to(named[name].dtype)
    table = named.get(DECAYED_TOKEN_TABLE)
    if table is not None and config.weight_decay:
        with torch.no_grad():
            table[NUM_SPECIAL:].mul_(1.0 - config.learning_rate * config.weight_decay)
    optimizer.step()
    return params, optimizer


# --- gradient oracle ---

def gradient_check(params: SkillEncoder, batch, config: TrainConfig, eps: float = 1e-4) -> float:
    """Max relative error of autograd against central differences, in float64"""
    model = copy.deepcopy(params).double()
    model.eval()
    _, analytic = backward(model, batch, config)
    scale_floor = 1e-3 * max(float(g.abs().max()) for g in analytic.values())
    worst = 0.0
    with torch.no_grad():
        for name, parameter in model.named_parameters():
            flat = parameter.view(-1)
            expected = analytic[name].view(-1)
            for i in range(flat.numel()):
                original = flat[i].item()
                flat[i] = original + eps
                plus = float(batch_loss(model, batch, config))
                flat[i] = original - eps
                minus = float(batch_loss(model, batch, config))
                flat[i] = original
                numeric = (plus - minus) / (2 * eps)
                exact = float(expected[i])
                denominator = max(abs(exact), abs(numeric), scale_floor)
                if denominator > 0:
                    worst = max(worst, abs(exact - numeric) / denominator)
    return worst


# --- batching ---

def make_batches(keys: Sequence[str], batch_size: int, seed) -> List[List[int]]:
    """Shuffled index batches with no repeated key inside a batch"""
    order = [int(i) for i in np.random.default_rng(seed).permutation(len(keys))]
    target = min(batch_size, len(set(keys)))
    batches = []
    pending = order
    while pending:
        batch, seen, spill = [], set(), []
        for index in pending:
            if len(batch) < batch_size and keys[index] not in seen:
                batch.append(index)
                seen.add(keys[index])
            else:
                spill.append(index)
        batches.append(batch)
        pending = spill
    if batches and len(batches[-1]) < target:
        batches.pop()
    return batches


def vocabulary_texts(pairs: Sequence[TrainingPair]) -> List[str]:
    """Every title, label and skill phrase the encoder will see"""
    texts = []
    for pair in pairs:
        texts.append(pair.title)
        texts.append(pair.label)
        texts.extend(skill.lower() for skill in pair.skills)
    return texts


def split_validation(pairs: Sequence[TrainingPair], fraction: float, seed: int):
    order = np.random.default_rng(seed).permutation(len(pairs))
    count = max(1, int(round(len(pairs) * fraction)))
    held_out = sorted(int(i) for i in order[:count])
    kept = sorted(int(i) for i in order[count:])
    return [pairs[i] for i in kept], [pairs[i] for i in held_out]


def state_path(checkpoint_path) -> Path:
    return Path(f"{checkpoint_path}.state.pt")


class Trainer:
    """Runs epochs of deduplicated in-batch-negative steps over training pairs"""

    def __init__(self, params: SkillEncoder, vocab: Vocabulary, config: TrainConfig,
                 checkpoint_path=None, log_path=None):
        self.params = params
        self.vocab = vocab
        self.config = config.validate()
        self.checkpoint_path = checkpoint_path
        self.log_path = log_path
        self.optimizer = build_optimizer(params, config)
        self.step = 0
        self.log = TrainLog()

    def _encode(self, pairs):
        return [(encode_title(p.title, self.vocab), encode_skills(p.skills, self.vocab)) for p in pairs]

    def resume(self):
        """Restore optimizer state and the completed step count"""
        path = state_path(self.checkpoint_path)
        if not path.exists():
            raise IoFailure(f"no training state to resume from: {path}")
        state = torch.load(path, weights_only=True)
        self.optimizer.load_state_dict(state['optimizer'])
        self.step = int(state['step'])
        torch.set_rng_state(state['rng_state'])
        if self.log_path is not None and Path(self.log_path).exists():
            self.log = TrainLog.load(self.log_path).until(self.step)
        logger.info("training resumed", step=self.step, path=str(path))

    def _save(self):
        if self.checkpoint_path is None:
            return
        save_checkpoint(self.params, self.checkpoint_path, self.vocab)
        state = {
            'optimizer': self.optimizer.state_dict(),
            'step': self.step,
            'rng_state': torch.get_rng_state(),
            'config': asdict(self.config),
        }
        path = state_path(self.checkpoint_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + '.tmp')
        try:
            torch.save(state, tmp)
            tmp.replace(path)
        except OSError as e:
            raise IoFailure(f"cannot write training state {path}: {e}") from e

    def run_validation(self, validation, labels):
        """Validation loss plus title-mode Recall@1 against an index of labels"""
        self.params.eval()
        with torch.no_grad():
            keys = [p.label for p in validation]
            batches = make_batches(keys, self.config.batch_size, self.config.shuffle_seed)
            batches = batches or [list(range(len(validation)))]
            encoded = self._encode(validation)
            losses = [float(batch_loss(self.params, [encoded[i] for i in b], self.config)) for b in batches]

        encoder = DualEncoder(self.params, self.vocab)
        index = build_index_for(encoder, labels)
        queries = encoder.embed_many([JobRecord(title=p.title) for p in validation], Mode.TITLE)
        results = [(index.label_id(p.label), query(index, q, 1)) for p, q in zip(validation, queries)]
        self.params.train()
        return float(np.mean(losses)), recall_at_n(results, 1)

    def train(self, pairs: Sequence[TrainingPair]):
        config = self.config
        if len(pairs) < config.batch_size:
            raise DatasetTooSmall(f"{len(pairs)} pairs is fewer than batch_size {config.batch_size}")
        training, validation = split_validation(pairs, config.validation_fraction, config.shuffle_seed)
        labels = list(dict.fromkeys(p.label for p in pairs))
        keys = [p.label for p in training]
        if not make_batches(keys, config.batch_size, (config.shuffle_seed, 0)):
            raise DatasetTooSmall(f"{len(training)} training pairs do not fill one batch")
        encoded = self._encode(training)
        logger.info(
            "training started",
            pairs=len(training), validation=len(validation), labels=len(labels),
            effective_batch=min(config.batch_size, len(set(keys))), resume_from=self.step,
        )

        if self.step == 0:
            torch.manual_seed(self.params.config.init_seed)
        self.params.train()
        completed = 0
        for epoch in range(config.epochs):
            for batch in make_batches(keys, config.batch_size, (config.shuffle_seed, epoch)):
                completed += 1
                if completed <= self.step:
                    continue
                started = time.perf_counter()
                self.optimizer.zero_grad(set_to_none=True)
                loss = batch_loss(self.params, [encoded[i] for i in batch], config)
                if not torch.isfinite(loss):
                    raise NonFiniteGradient(completed, 'loss')
                loss.backward()
                _check_gradients(self.params, completed)
                optimizer_step(self.params, None, self.optimizer, config)
                for name, parameter in self.params.named_parameters():
                    if not torch.isfinite(parameter).all():
                        raise NonFiniteGradient(completed, name)
                self.step = completed
                self.log.add_step(completed, float(loss.detach()), time.perf_counter() - started)
                logger.debug("training step", step=completed, loss=float(loss.detach()))

                if completed % config.checkpoint_every == 0:
                    self._checkpoint(validation, labels)

        if not self.log.validations or self.log.validations[-1]['step'] != self.step:
            self._checkpoint(validation, labels)
        self.params.eval()
        logger.info(
            "training finished",
            steps=self.step,
            initial_loss=self.log.initial_mean_loss,
            final_loss=self.log.final_mean_loss,
        )
        return self.params, self.log

    def _checkpoint(self, validation, labels):
        val_loss, val_r1 = self.run_validation(validation, labels)
        self.log.add_validation(self.step, val_loss, val_r1)
        logger.info("validation", step=self.step, val_loss=round(val_loss, 4), val_recall_at_1=val_r1)
        self._save()
        if self.log_path is not None:
            self.log.save(self.log_path)


def train(params: SkillEncoder, pairs: Sequence[TrainingPair], vocab: Vocabulary, config: TrainConfig,
          checkpoint_path=None, log_path=None, resume=False):
    """Train in place and return (params, TrainLog)"""
    trainer = Trainer(params, vocab, config, checkpoint_path=checkpoint_path, log_path=log_path)
    if resume:
        trainer.resume()
    return trainer.train(pairs)
