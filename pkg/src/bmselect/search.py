"""Posterior inference over candidate models.

Small model spaces are enumerated exactly. Larger spaces are explored by a
Metropolis-Hastings sampler whose proposal prioritizes covariates with strong
conditional single-covariate evidence, mixing configuration-change moves with
configuration swaps. Inclusion probabilities are Rao-Blackwellized: at
retained samples the exact conditional posterior of each covariate's
configuration given the rest is computed from model Bayes factors and
averaged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .bayes_factors import LOG10, as_alpha, model_bf
from .data import SSMRData
from .exceptions import DataValidationError, ResourceLimitError
from .models import ModelConfig, code_to_gamma, gamma_to_string
from .priors import PriorSpec
from .regression import NullModel, prepare


def state_strings(n_cells: int) -> list:
    return [gamma_to_string(code_to_gamma(code, n_cells)) for code in range(1 << n_cells)]


def sparse_key(codes: np.ndarray) -> tuple:
    """Canonical compact identity of a model: sorted (covariate, state) pairs.

    Keeps cache keys O(active covariates) instead of O(p); exact because
    absent covariates are null by construction.
    """
    nz = np.flatnonzero(codes)
    return tuple(zip(nz.tolist(), codes[nz].tolist()))


class ModelScorer:
    """Caches model scores (log prior, log10 Bayes factor) by model identity.

    One scorer binds a dataset, a prior specification and the shrinkage
    weight; every posterior routine in this module shares it so a model is
    priced at most once. The cache evicts lowest-score entries when it
    exceeds ``cache_cap``.
    """

    def __init__(self, data: SSMRData, prior: PriorSpec, alpha=0.5,
                 grid_budget: int = 4096, grid_seed: int = 0,
                 cache_cap: int = 200_000, null: NullModel | None = None):
        self.data = data
        self.prior = prior
        self.alpha = as_alpha(alpha, data.s)
        self.grid_budget = int(grid_budget)
        self.grid_seed = int(grid_seed)
        self.cache_cap = int(cache_cap)
        self.null = null if null is not None else prepare(data)
        self.n_states = 1 << (data.s * data.r)
        self._cache: dict = {}
        self._log_prior_table = np.array([
            prior.model_prior.log_prob_code(c) for c in range(self.n_states)
        ])
        self._gamma_table = np.stack([
            code_to_gamma(c, data.s * data.r) for c in range(self.n_states)
        ])
        self.n_evaluations = 0

    def log_prior_of_codes(self, codes: np.ndarray) -> float:
        return float(self._log_prior_table[codes].sum())

    def score(self, model: ModelConfig, key: tuple | None = None):
        """(log prior, log10 model BF); cached by sparse model identity."""
        codes = model.codes()
        if key is None:
            key = sparse_key(codes)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        lp = self.log_prior_of_codes(codes)
        bf = model_bf(
            self.data, model, self.prior, alpha=self.alpha,
            budget=self.grid_budget, seed=self.grid_seed, null=self.null,
        )
        self.n_evaluations += 1
        out = (lp, bf.log10_bf)
        if len(self._cache) >= self.cache_cap:
            self._shrink_cache()
        self._cache[key] = out
        return out

    def log_post(self, model: ModelConfig) -> float:
        """Unnormalized log posterior score (natural log)."""
        lp, lbf = self.score(model)
        return lp + LOG10 * lbf

    def _shrink_cache(self):
        # drop the lowest-score half; deterministic tie-break on the key bytes
        items = sorted(self._cache.items(), key=lambda kv: (kv[1][0] + LOG10 * kv[1][1], kv[0]))
        for key, _ in items[: len(items) // 2]:
            del self._cache[key]

    def _conditional_row(self, scratch: np.ndarray, rest_pairs: list, j: int) -> np.ndarray:
        """Scores over covariate ``j``'s states; ``rest_pairs`` excludes ``j``."""
        import bisect

        out = np.empty(self.n_states)
        for code in range(self.n_states):
            if code == 0:
                key = tuple(rest_pairs)
            else:
                pos = bisect.bisect(rest_pairs, (j,))
                key = tuple(rest_pairs[:pos] + [(j, code)] + rest_pairs[pos:])
            hit = self._cache.get(key)
            if hit is None:
                scratch[j] = self._gamma_table[code]
                hit = self.score(
                    ModelConfig(scratch.copy(), self.data.s, self.data.r), key=key
                )
            out[code] = hit[0] + LOG10 * hit[1]
        return out

    def conditional_log_post(self, model: ModelConfig, j: int) -> np.ndarray:
        """Log posterior score of every configuration of covariate ``j``, rest fixed."""
        codes = model.codes()
        rest = [(jj, cc) for jj, cc in sparse_key(codes) if jj != j]
        scratch = np.array(model.gammas)
        row = self._conditional_row(scratch, rest, j)
        scratch[j] = model.gammas[j]
        return row

    def conditional_matrix(self, model: ModelConfig) -> np.ndarray:
        """Normalized conditional configuration posteriors for every covariate."""
        codes = model.codes()
        pairs = list(sparse_key(codes))
        scratch = np.array(model.gammas)
        rows = np.empty((model.p, self.n_states))
        for j in range(model.p):
            rest = [pc for pc in pairs if pc[0] != j]
            rows[j] = self._conditional_row(scratch, rest, j)
            scratch[j] = model.gammas[j]
        log_norm = logsumexp(rows, axis=1, keepdims=True)
        return np.exp(rows - log_norm)


@dataclass(frozen=True)
class TopModel:
    codes: tuple
    gamma_strings: tuple
    visits: int
    log10_score: float


@dataclass
class PosteriorSummary:
    """Posterior output of enumeration or sampling.

    ``pip[j, c]`` is the marginal posterior probability that covariate ``j``
    has configuration code ``c`` (column 0 is the null configuration); rows
    sum to one. For sampler output ``pip`` is the Rao-Blackwellized estimate
    and ``pip_freq`` the raw indicator frequency. ``top_models`` is sorted by
    posterior score. ``region_probs`` maps region name -> configuration
    string (or "any") -> probability that the region holds at least one
    active covariate with that configuration.
    """

    pip: np.ndarray
    top_models: list
    state_labels: list
    diagnostics: dict = field(default_factory=dict)
    pip_freq: np.ndarray | None = None
    region_probs: dict | None = None

    @property
    def n_states(self) -> int:
        return self.pip.shape[1]


def _check_regions(regions, p: int) -> dict:
    out = {}
    for name, idx in regions.items():
        arr = np.asarray(sorted(int(i) for i in idx), dtype=np.intp)
        if arr.size == 0:
            raise DataValidationError(f"region {name!r} is empty")
        if arr.min() < 0 or arr.max() >= p:
            raise DataValidationError(f"region {name!r} references covariates outside [0, {p})")
        out[str(name)] = arr
    return out


def regional_probs(weighted_models, regions: dict, n_cells: int) -> dict:
    """Probability each region holds an active covariate, per configuration.

    ``weighted_models`` yields ``(codes, weight)`` pairs with normalized
    weights. For every region and non-null configuration code the returned
    map holds the total weight of models in which some covariate of the
    region carries that configuration, plus an ``"any"`` entry for any
    non-null configuration.
    """
    labels = state_strings(n_cells)
    checked = None
    out = {}
    for codes, weight in weighted_models:
        codes = np.asarray(codes)
        if checked is None:
            checked = _check_regions(regions, codes.size)
            out = {
                name: {labels[c]: 0.0 for c in range(1, 1 << n_cells)} | {"any": 0.0}
                for name in checked
            }
        for name, idx in checked.items():
            region_codes = codes[idx]
            present = np.unique(region_codes[region_codes > 0])
            for c in present:
                out[name][labels[int(c)]] += weight
            if present.size:
                out[name]["any"] += weight
    if checked is None:
        raise DataValidationError("no models supplied for regional probabilities")
    return out


def enumerate_posterior(data: SSMRData, prior: PriorSpec, alpha=0.5,
                        max_models: int = 1 << 16, regions: dict | None = None,
                        scorer: ModelScorer | None = None,
                        top_models_cap: int = 10000) -> PosteriorSummary:
    """Exact posterior over the full model space.

    Only feasible when ``n_states ** p`` is at most ``max_models``; larger
    spaces raise and should be sampled with :func:`run_mcmc` instead.
    """
    if scorer is None:
        scorer = ModelScorer(data, prior, alpha=alpha)
    p = data.p
    n_states = scorer.n_states
    if p * math.log(n_states) > math.log(max_models) + 1e-12:
        raise ResourceLimitError(
            f"model space has {n_states}^{p} candidates (> {max_models}); "
            "run the MCMC sampler instead"
        )
    total = n_states ** p
    codes = np.zeros(p, dtype=np.int64)
    all_codes = np.empty((total, p), dtype=np.int64)
    scores = np.empty(total)
    for m in range(total):
        value = m
        for j in range(p):
            codes[j] = value % n_states
            value //= n_states
        model = ModelConfig.from_codes(codes, p, data.s, data.r)
        all_codes[m] = codes
        scores[m] = scorer.log_post(model)
    log_norm = logsumexp(scores)
    post = np.exp(scores - log_norm)

    pip = np.zeros((p, n_states))
    for j in range(p):
        np.add.at(pip[j], all_codes[:, j], post)
    order = np.argsort(-scores, kind="stable")[:top_models_cap]
    top = [
        TopModel(
            tuple(int(c) for c in all_codes[m]),
            tuple(gamma_to_string(code_to_gamma(int(c), data.s * data.r)) for c in all_codes[m]),
            0,
            scores[m] / LOG10,
        )
        for m in order
    ]
    region = None
    if regions is not None:
        region = regional_probs(
            ((all_codes[m], post[m]) for m in range(total)), regions, data.s * data.r
        )
    diag = {
        "method": "enumeration",
        "n_models": int(total),
        "log10_normalizer": float(log_norm / LOG10),
    }
    return PosteriorSummary(pip, top, state_strings(data.s * data.r), diag, region_probs=region)


@dataclass(frozen=True)
class ProposalWeights:
    """Per-covariate proposal weights built from staged conditional scans.

    ``rounds[j]`` holds the log10 single-covariate Bayes factors of round
    ``j`` (averaged equally over non-null configurations, conditioning on the
    top signals identified in earlier rounds); ``p_seq`` are the
    non-increasing stage probabilities whose last entry is the uniform floor
    guaranteeing every covariate a positive weight.
    """

    weights: np.ndarray
    rounds: np.ndarray
    p_seq: tuple
    conditioned_on: tuple

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise DataValidationError("proposal weights must be strictly positive")


def _scan_log10_bfs(scorer: ModelScorer, base: ModelConfig, skip: set) -> np.ndarray:
    """Log10 BF of setting each covariate to each non-null state, given ``base``.

    Covariates in ``skip`` are scanned against ``base`` minus themselves.
    Returns an array of shape (p, n_states) whose null column is the base
    score itself (so differences give conditional evidence).
    """
    p = scorer.data.p
    out = np.empty((p, scorer.n_states))
    base_codes = base.codes()
    for j in range(p):
        rest = base if (j not in skip or base_codes[j] == 0) else base.replace_covariate(j, 0)
        for code in range(scorer.n_states):
            _, lbf = scorer.score(rest.replace_covariate(j, code))
            out[j, code] = lbf
    return out


def build_proposal(data: SSMRData, prior: PriorSpec, alpha=0.5, n_rounds: int = 4,
                   p_seq=(0.624, 0.250, 0.125, 0.010),
                   scorer: ModelScorer | None = None) -> ProposalWeights:
    """Stage-weighted proposal distribution over covariates.

    Round 1 scores every covariate by its marginal single-covariate Bayes
    factor (equal average over non-null configurations). Each later round
    conditions on the strongest signals found so far, held at their highest
    scoring configurations. The final stage assigns the uniform floor. Stage
    scores combine as ``w_i = sum_j p_j BF_i^(j) + p_n``.
    """
    p_seq = tuple(float(v) for v in p_seq)
    if n_rounds < 1 or len(p_seq) != n_rounds:
        raise DataValidationError("p_seq must have one probability per round")
    if any(b > a + 1e-12 for a, b in zip(p_seq, p_seq[1:])):
        raise DataValidationError("p_seq must be non-increasing")
    if scorer is None:
        scorer = ModelScorer(data, prior, alpha=alpha)
    p = data.p
    n_cells = data.s * data.r
    nonnull = np.arange(1, scorer.n_states)

    rounds = np.zeros((max(0, n_rounds - 1), p))
    base = ModelConfig.null(p, data.s, data.r)
    controls: list = []
    for stage in range(n_rounds - 1):
        table = _scan_log10_bfs(scorer, base, set(controls))
        base_lbf = np.array([
            scorer.score(base if j not in controls else base.replace_covariate(j, 0))[1]
            for j in range(p)
        ])
        cond = table[:, nonnull] - base_lbf[:, None]
        rounds[stage] = (logsumexp(LOG10 * cond, axis=1) - math.log(nonnull.size)) / LOG10
        pick = int(np.argmax(np.where(np.isin(np.arange(p), controls), -np.inf, rounds[stage])))
        prior_logs = np.array([
            scorer.prior.model_prior.log_prob_code(int(c)) for c in nonnull
        ])
        map_code = int(nonnull[np.argmax(prior_logs + LOG10 * cond[pick])])
        controls.append(pick)
        base = base.replace_covariate(pick, map_code)

    log_w = np.full(p, math.log(p_seq[-1]))
    if n_rounds > 1:
        staged = np.log(np.asarray(p_seq[:-1]))[:, None] + LOG10 * rounds
        log_w = np.logaddexp(logsumexp(staged, axis=0), log_w)
    weights = np.exp(log_w - logsumexp(log_w))
    return ProposalWeights(weights, rounds, p_seq, tuple(controls))


@dataclass(frozen=True)
class McmcConfig:
    """Sampler configuration. Defaults match the production run lengths."""

    burn_in: int = 25000
    samples: int = 50000
    seed: int = 0
    move_mix: tuple = (0.85, 0.15)
    proposal_rounds: int = 4
    proposal_probs: tuple = (0.624, 0.250, 0.125, 0.010)
    grid_budget: int = 4096
    rb_eval_budget: int = 500_000
    enumerable_cutoff: int = 4096
    top_models_cap: int = 10000

    def __post_init__(self):
        if self.samples < 1 or self.burn_in < 0:
            raise DataValidationError("samples must be >= 1 and burn_in >= 0")
        if len(self.move_mix) != 2 or abs(sum(self.move_mix) - 1.0) > 1e-9 or min(self.move_mix) < 0:
            raise DataValidationError("move_mix must be two non-negative probabilities summing to 1")


class _TopModelLedger:
    """Bounded registry of visited models keyed by identity."""

    def __init__(self, cap: int):
        self.cap = cap
        self.entries: dict = {}

    def visit(self, key: bytes, codes: np.ndarray, log10_score: float):
        entry = self.entries.get(key)
        if entry is None:
            if len(self.entries) >= self.cap:
                self._evict()
            self.entries[key] = [np.array(codes), 1, log10_score]
        else:
            entry[1] += 1

    def _evict(self):
        items = sorted(self.entries.items(), key=lambda kv: (kv[1][2], kv[0]))
        for key, _ in items[: max(1, len(items) // 10)]:
            del self.entries[key]

    def top(self, n_cells: int) -> list:
        items = sorted(self.entries.items(), key=lambda kv: (-kv[1][2], kv[0]))
        return [
            TopModel(
                tuple(int(c) for c in codes),
                tuple(gamma_to_string(code_to_gamma(int(c), n_cells)) for c in codes),
                int(visits),
                float(score),
            )
            for _, (codes, visits, score) in items
        ]


def convergence_diagnostic(visit_counts, log10_scores, top_k: int = 50):
    """Rank correlation between how often models were visited and how they score.

    Computed over the ``top_k`` most visited models; returns ``None`` when
    fewer than two distinct models were visited or the correlation is
    undefined (zero variance in either ranking).
    """
    visits = np.asarray(visit_counts, dtype=np.float64)
    scores = np.asarray(log10_scores, dtype=np.float64)
    if visits.size != scores.size:
        raise DataValidationError("visit counts and scores must align")
    if visits.size < 2:
        return None
    order = np.argsort(-visits, kind="stable")[:top_k]
    v, s = visits[order], scores[order]
    if np.ptp(v) == 0 or np.ptp(s) == 0:
        return None
    from scipy.stats import spearmanr  # deferred: scipy.stats is heavy

    rho = spearmanr(v, s).statistic
    return None if np.isnan(rho) else float(rho)


def _rb_stride(cfg: McmcConfig, p: int, n_states: int) -> int:
    """Deterministic Rao-Blackwell thinning.

    Every retained sample gets an update when the model space is small enough
    to enumerate (conditional scans then hit the score cache); otherwise the
    stride bounds the total number of conditional evaluations by the
    configured budget.
    """
    if p * math.log(n_states) <= math.log(cfg.enumerable_cutoff) + 1e-12:
        return 1
    per_sweep = p * n_states
    max_sweeps = max(1, cfg.rb_eval_budget // per_sweep)
    return max(1, -(-cfg.samples // max_sweeps))


def run_mcmc(data: SSMRData, prior: PriorSpec, cfg: McmcConfig | None = None, alpha=0.5,
             regions: dict | None = None, scorer: ModelScorer | None = None,
             proposal: ProposalWeights | None = None,
             collect_trace: bool = False) -> PosteriorSummary:
    """Metropolis-Hastings sampling of the model posterior.

    Proposals pick a covariate from the precomputed weights and either draw a
    fresh configuration for it uniformly (among the other configurations,
    null included) or swap configurations with a uniformly chosen covariate
    currently holding a different one; swap asymmetry enters the acceptance
    ratio. Interrupting a long run returns the summary accumulated so far.
    """
    if cfg is None:
        cfg = McmcConfig()
    if scorer is None:
        scorer = ModelScorer(
            data, prior, alpha=alpha, grid_budget=cfg.grid_budget, grid_seed=cfg.seed
        )
    if proposal is None:
        proposal = build_proposal(
            data, prior, alpha=alpha, n_rounds=cfg.proposal_rounds,
            p_seq=cfg.proposal_probs, scorer=scorer,
        )
    regions_checked = _check_regions(regions, data.p) if regions else None

    p = data.p
    n_states = scorer.n_states
    n_cells = data.s * data.r
    rng = np.random.default_rng(cfg.seed)
    cum_w = np.cumsum(proposal.weights)
    cum_w[-1] = 1.0

    current = ModelConfig.null(p, data.s, data.r)
    codes = current.codes()
    current_lp = scorer.log_post(current)
    # counts[c] = number of covariates currently in configuration c
    counts = np.zeros(n_states, dtype=np.int64)
    counts[0] = p

    ledger = _TopModelLedger(cfg.top_models_cap)
    rb_accum = np.zeros((p, n_states))
    rb_sweeps = 0
    freq_accum = np.zeros((p, n_states))
    region_accum = (
        {name: np.zeros(n_states) for name in regions_checked} if regions_checked else None
    )
    region_any = {name: 0.0 for name in regions_checked} if regions_checked else None
    accepted = 0
    proposed = 0
    stride = _rb_stride(cfg, p, n_states)
    rb_cache: dict = {}
    trace = [] if collect_trace else None

    total_steps = cfg.burn_in + cfg.samples
    retained = 0
    try:
        for step in range(total_steps):
            u_cov = rng.random()
            j1 = int(np.searchsorted(cum_w, u_cov, side="right"))
            move_swap = rng.random() < cfg.move_mix[1]
            candidate = None

            if not move_swap:
                shift = int(rng.integers(n_states - 1))
                new_code = shift if shift < codes[j1] else shift + 1
                candidate = current.replace_covariate(j1, new_code)
                log_hastings = 0.0
                change = ("config", j1, int(codes[j1]), new_code)
            else:
                different = p - int(counts[codes[j1]])
                if different == 0:
                    proposed += 1
                    if collect_trace:
                        trace.append({"step": step, "move": "swap-noop", "accepted": False})
                    if step >= cfg.burn_in:
                        retained += 1
                        if _accumulate(
                            codes, current_lp, freq_accum, ledger, current, scorer,
                            rb_accum, stride, retained, region_accum, region_any,
                            regions_checked, n_states, rb_cache,
                        ):
                            rb_sweeps += 1
                    continue
                pick = int(rng.integers(different))
                mask = codes != codes[j1]
                j2 = int(np.flatnonzero(mask)[pick])
                candidate = current.swap_covariates(j1, j2)
                d1 = p - int(counts[codes[j1]])
                d2 = p - int(counts[codes[j2]])
                w1, w2 = proposal.weights[j1], proposal.weights[j2]
                fwd = w1 / d1 + w2 / d2
                rev = w1 / d2 + w2 / d1
                log_hastings = math.log(rev) - math.log(fwd)
                change = ("swap", j1, j2)

            proposed += 1
            cand_lp = scorer.log_post(candidate)
            log_ratio = cand_lp - current_lp + log_hastings
            accept = log_ratio >= 0 or math.log(rng.random()) < log_ratio
            if collect_trace:
                trace.append({
                    "step": step, "move": change, "log_ratio": log_ratio,
                    "accepted": bool(accept), "log_post": cand_lp if accept else current_lp,
                })
            if accept:
                accepted += 1
                if change[0] == "config":
                    counts[change[2]] -= 1
                    counts[change[3]] += 1
                current = candidate
                codes = current.codes()
                current_lp = cand_lp

            if step >= cfg.burn_in:
                retained += 1
                did_rb = _accumulate(
                    codes, current_lp, freq_accum, ledger, current, scorer,
                    rb_accum, stride, retained, region_accum, region_any,
                    regions_checked, n_states, rb_cache,
                )
                if did_rb:
                    rb_sweeps += 1
    except KeyboardInterrupt:
        pass

    if retained == 0:
        raise ResourceLimitError("sampler was interrupted before any samples were retained")

    pip_freq = freq_accum / retained
    pip = rb_accum / rb_sweeps if rb_sweeps else pip_freq.copy()
    top = ledger.top(n_cells)
    rho = convergence_diagnostic(
        [t.visits for t in top], [t.log10_score for t in top]
    ) if top else None
    diag = {
        "method": "mcmc",
        "acceptance_rate": accepted / proposed if proposed else 0.0,
        "n_retained": retained,
        "n_rb_sweeps": int(rb_sweeps),
        "rb_stride": int(stride),
        "rank_correlation": rho,
        "n_distinct_models": len(ledger.entries),
        "n_bf_evaluations": scorer.n_evaluations,
        "seed": cfg.seed,
        "proposal_conditioned_on": list(proposal.conditioned_on),
    }
    if collect_trace:
        diag["trace"] = trace
    region = None
    if regions_checked:
        labels = state_strings(n_cells)
        region = {}
        for name in regions_checked:
            region[name] = {
                labels[c]: region_accum[name][c] / retained for c in range(1, n_states)
            }
            region[name]["any"] = region_any[name] / retained
    return PosteriorSummary(
        pip, top, state_strings(n_cells), diag, pip_freq=pip_freq, region_probs=region
    )


def _accumulate(codes, current_lp, freq_accum, ledger, current, scorer, rb_accum,
                stride, retained, region_accum, region_any, regions_checked, n_states,
                rb_cache):
    """Per-retained-sample bookkeeping; returns True when an RB sweep ran."""
    p = codes.shape[0]
    key = sparse_key(codes)
    freq_accum[np.arange(p), codes] += 1.0
    ledger.visit(key, codes, current_lp / LOG10)
    if regions_checked:
        for name, idx in regions_checked.items():
            region_codes = codes[idx]
            present = np.unique(region_codes[region_codes > 0])
            if present.size:
                region_accum[name][present] += 1.0
                region_any[name] += 1.0
    if stride and (retained - 1) % stride == 0:
        # chains revisit the same model for long stretches; reuse its rows
        if rb_cache.get("key") != key:
            rb_cache["key"] = key
            rb_cache["rows"] = scorer.conditional_matrix(current)
        rb_accum += rb_cache["rows"]
        return True
    return False


def single_covariate_scan(data: SSMRData, prior: PriorSpec, alpha=0.5,
                          regions: dict | None = None,
                          scorer: ModelScorer | None = None):
    """Independent per-covariate posteriors over configurations.

    Each covariate is priced alone against the null model; the posterior over
    its configurations is the prior times the single-covariate Bayes factor,
    normalized. When regions are supplied, regional probabilities are
    computed under the assumption of at most one active covariate per region.
    """
    if scorer is None:
        scorer = ModelScorer(data, prior, alpha=alpha)
    p = data.p
    n_states = scorer.n_states
    null_model = ModelConfig.null(p, data.s, data.r)
    log10_bfs = _scan_log10_bfs(scorer, null_model, set())
    log10_bfs -= log10_bfs[:, [0]]
    prior_logs = np.array([
        scorer.prior.model_prior.log_prob_code(c) for c in range(n_states)
    ])
    scores = prior_logs[None, :] + LOG10 * log10_bfs
    posterior = np.exp(scores - logsumexp(scores, axis=1, keepdims=True))

    region_out = None
    if regions is not None:
        checked = _check_regions(regions, p)
        labels = state_strings(data.s * data.r)
        pi0 = scorer.prior.model_prior.pi0
        region_out = {}
        for name, idx in checked.items():
            # at most one active covariate in the region: candidate models are
            # the null plus one (covariate, configuration) choice
            t_by_state = logsumexp(scores[idx][:, 1:], axis=0)
            t_all = logsumexp(t_by_state)
            denom = np.logaddexp(math.log(pi0), t_all)
            entry = {
                labels[c]: float(np.exp(t_by_state[c - 1] - denom))
                for c in range(1, n_states)
            }
            entry["any"] = float(np.exp(t_all - denom))
            region_out[name] = entry
    return ScanResult(log10_bfs, posterior, state_strings(data.s * data.r), region_out)


@dataclass(frozen=True)
class ScanResult:
    """Single-covariate scan output: per-covariate log10 BFs and posteriors."""

    log10_bfs: np.ndarray
    posterior: np.ndarray
    state_labels: list
    region_probs: dict | None = None
