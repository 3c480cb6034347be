"""
Byte-pair-encoding vocabulary and token counting operations module
"""

import heapq
import logging
from collections import Counter, defaultdict
from functools import partial
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from db.database import CorpusDatabase
from errors import InvalidInputError
from feature_ops import language_rng, sample_indices
from models import CorpusManifest, DedupStatus, ModuleRecord, SampleDescription, TokenCountEntry, TokenCountReport
from worker_ops import parallel_map

logger = logging.getLogger(__name__)

Pair = Tuple[str, str]


def _merge_word(symbols: Sequence[str], pair: Pair) -> List[str]:
    left, right = pair
    merged: List[str] = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
            merged.append(left + right)
            i += 2
        else:
            merged.append(symbols[i])
            i += 1
    return merged


class BpeModel:
    pretokenizer = "whitespace"

    def __init__(self, merges: Sequence[Pair], base_symbols: Iterable[str] = (), vocab_size_target: Optional[int] = None):
        self.merges: List[Pair] = [tuple(m) for m in merges]
        self.vocab: Dict[str, int] = {}
        for symbol in sorted(set(base_symbols) | {part for pair in self.merges for part in pair}
                             - {a + b for a, b in self.merges}):
            self.vocab[symbol] = len(self.vocab)
        for left, right in self.merges:
            self.vocab.setdefault(left + right, len(self.vocab))
        self.vocab_size_target = vocab_size_target or len(self.vocab)
        self._ranks: Dict[Pair, int] = {}
        for rank, pair in enumerate(self.merges):
            self._ranks.setdefault(pair, rank)
        self._cache: Dict[str, Tuple[str, ...]] = {}

    def tokenize_word(self, word: str) -> Tuple[str, ...]:
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        symbols = list(word)
        ranks = self._ranks
        while len(symbols) > 1:
            best = min((ranks[p] for p in zip(symbols, symbols[1:]) if p in ranks), default=None)
            if best is None:
                break
            symbols = _merge_word(symbols, self.merges[best])
        tokens = tuple(symbols)
        self._cache[word] = tokens
        return tokens

    def tokenize(self, text: str) -> List[str]:
        return [token for word in text.split() for token in self.tokenize_word(word)]

    def truncated(self, vocab_size: int) -> "BpeModel":
        """The model training would have produced for a smaller vocabulary target"""
        base = [symbol for symbol in self.vocab if symbol not in {a + b for a, b in self.merges}]
        vocab = set(base)
        if vocab_size < len(vocab):
            raise InvalidInputError(f"vocab_size {vocab_size} is smaller than the base alphabet ({len(vocab)})")
        kept: List[Pair] = []
        for left, right in self.merges:
            if len(vocab) >= vocab_size:
                break
            kept.append((left, right))
            vocab.add(left + right)
        return BpeModel(kept, base, vocab_size)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for left, right in self.merges:
                f.write(f"{left} {right}\n")

    @classmethod
    def load(cls, path: str, vocab_size_target: Optional[int] = None) -> "BpeModel":
        merges = []
        with open(path, "r", encoding="utf-8") as f:
            for number, line in enumerate(f, start=1):
                parts = line.rstrip("\n").split(" ")
                if len(parts) != 2 or not all(parts):
                    raise InvalidInputError(f"line {number}: expected 'left right'")
                merges.append((parts[0], parts[1]))
        return cls(merges, vocab_size_target=vocab_size_target)


def train_bpe(texts: Iterable[str], vocab_size: int) -> BpeModel:
    """Merge the most frequent adjacent pair until the target vocabulary size or no pair repeats"""
    word_counts: Counter = Counter()
    for text in texts:
        word_counts.update(text.split())
    alphabet = sorted({ch for word in word_counts for ch in word})
    if vocab_size < len(alphabet):
        raise InvalidInputError(f"vocab_size {vocab_size} is smaller than the base alphabet ({len(alphabet)})")

    words = [list(word) for word in word_counts]
    counts = list(word_counts.values())
    pair_counts: Dict[Pair, int] = defaultdict(int)
    where: Dict[Pair, Set[int]] = defaultdict(set)
    for index, symbols in enumerate(words):
        for pair in zip(symbols, symbols[1:]):
            pair_counts[pair] += counts[index]
            where[pair].add(index)
    heap = [(-count, pair) for pair, count in pair_counts.items()]
    heapq.heapify(heap)

    vocab = set(alphabet)
    merges: List[Pair] = []
    while len(vocab) < vocab_size and heap:
        negative, pair = heapq.heappop(heap)
        if pair_counts.get(pair, 0) != -negative:
            continue
        if -negative < 2:
            break
        merges.append(pair)
        vocab.add(pair[0] + pair[1])

        touched: Dict[Pair, None] = {}
        for index in sorted(where.pop(pair, ())):
            old = words[index]
            for p in zip(old, old[1:]):
                pair_counts[p] -= counts[index]
                touched[p] = None
            new = _merge_word(old, pair)
            words[index] = new
            for p in zip(new, new[1:]):
                pair_counts[p] += counts[index]
                where[p].add(index)
                touched[p] = None
        for p in touched:
            if pair_counts[p] > 0:
                heapq.heappush(heap, (-pair_counts[p], p))
            else:
                pair_counts.pop(p, None)
                where.pop(p, None)

    logger.info(f"Trained BPE: {len(merges)} merge(s), vocabulary {len(vocab)} (target {vocab_size})")
    return BpeModel(merges, alphabet, vocab_size)


def tokenize_count(model: BpeModel, text: str) -> int:
    return sum(len(model.tokenize_word(word)) for word in text.split())


def draw_training_sample(manifest: CorpusManifest, db: CorpusDatabase, per_language: int,
                         seed: int) -> Tuple[List[str], SampleDescription]:
    """Uniform per-language module sample; texts ordered by language, then manifest position"""
    population: Dict[str, List[ModuleRecord]] = defaultdict(list)
    for record in manifest.records:
        if record.dedup_status is not DedupStatus.REMOVED_DUPLICATE:
            population[record.language_tag.value].append(record)

    description = SampleDescription(per_language=per_language, seed=seed)
    texts: List[str] = []
    for language in sorted(population):
        records = population[language]
        picks = sorted(sample_indices(len(records), per_language, language_rng(seed, language)))
        if len(records) < per_language:
            description.capped_languages.append(language)
        taken = 0
        for index in picks:
            try:
                texts.append(db.read_text(records[index]))
                taken += 1
            except OSError as e:
                logger.warning(f"Skipping {records[index].artifact.path}: {e}")
        description.modules_per_language[language] = taken
    return texts, description


def _count_record(record: ModuleRecord, out_dir: str, models: Sequence[BpeModel]) -> Optional[List[int]]:
    try:
        text = CorpusDatabase(out_dir).read_text(record)
    except Exception as e:
        logger.warning(f"Skipping {record.artifact.path}: {e}")
        return None
    return [tokenize_count(model, text) for model in models]


def corpus_token_count(manifest: CorpusManifest, db: CorpusDatabase, vocab_sizes: Sequence[int],
                       per_language: int, seed: int, jobs: int = 1) -> TokenCountReport:
    """Train on one sample, then count tokens over the whole corpus at every vocabulary size"""
    if not vocab_sizes:
        raise InvalidInputError("at least one vocabulary size is required")
    sizes = sorted(set(vocab_sizes))
    texts, description = draw_training_sample(manifest, db, per_language, seed)
    # Training is greedy and deterministic, so smaller targets are prefixes of the largest run.
    largest = train_bpe(texts, sizes[-1])
    models = [largest.truncated(size) for size in sizes]

    live = [r for r in manifest.records if r.dedup_status is not DedupStatus.REMOVED_DUPLICATE]
    per_record = parallel_map(partial(_count_record, out_dir=db.out_dir, models=models), live, jobs=jobs,
                              desc="Counting tokens")
    totals = [0] * len(models)
    counted = skipped = 0
    for counts in per_record:
        if counts is None:
            skipped += 1
            continue
        counted += 1
        totals = [t + c for t, c in zip(totals, counts)]

    report = TokenCountReport(sample=description, counted_modules=counted, skipped_modules=skipped)
    for size, model, total in zip(sizes, models, totals):
        report.entries.append(TokenCountEntry(vocab_size=size, merges=len(model.merges),
                                              vocab_len=len(model.vocab), token_count=total))
        logger.info(f"vocab {size}: {total} token(s)")
    return report
