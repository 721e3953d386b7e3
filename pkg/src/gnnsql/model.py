"""Linking-augmented encoder and grammar-constrained decoder.

Per example the model computes: linking scores and their per-type
distribution, relevance, base item embeddings, graph-propagated item states,
a bidirectional LSTM over [word ; linked-item summary] inputs with the
graph-aware summary concatenated to its outputs, then decodes grammar
actions step by step. Structural rules are scored by a feed-forward over
[decoder state ; attended context]; schema items by attention-weighted
linking scores plus a self-attention bonus from previously decoded items.

Beam search additionally merges the greedy rollout into its finished pool,
which keeps the top-1 beam score at least the greedy score; with beam size 1
the two procedures are the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import gnn
from .autodiff import Tensor
from .config import RunConfig
from .data import Example, oracle_relevance, uniform_relevance
from .graph import SchemaGraph, build_graph
from .grammar import (Action, Derivation, Grammar, LegalActions, apply_rule,
                      derivation_to_sql, legal_actions, sql_to_derivation)
from .linking import (LinkingMatrix, Question, Vocab, feature_tensor, link_distribution,
                      link_scores, name_token_matrix, register_linking, relevance)
from .nn import ParamStore, birnn_encode, feed_forward, linear, lstm_cell, \
    register_birnn, register_feed_forward, register_lstm
from .schema import Schema, TYPE_ORDER


@dataclass(frozen=True)
class ModelMode:
    use_gnn: bool          # run the graph network at all
    phi_everywhere: bool   # graph states feed encoder summaries and decoder inputs
    self_attend: bool
    relevance: str         # learned | ones | oracle

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "ModelMode":
        if cfg.no_gnn:
            use_gnn, phi_everywhere, self_attend = False, False, False
        elif cfg.only_self_attend:
            use_gnn, phi_everywhere, self_attend = True, False, True
        else:
            use_gnn, phi_everywhere, self_attend = True, True, not cfg.no_self_attend
        rel = "oracle" if cfg.oracle_relevance else ("ones" if cfg.no_relevance else "learned")
        return cls(use_gnn=use_gnn, phi_everywhere=phi_everywhere,
                   self_attend=self_attend, relevance=rel)


@dataclass
class SchemaContext:
    schema: Schema
    graph: SchemaGraph
    name_matrix: np.ndarray   # [n_nodes, vocab]
    type_index: np.ndarray    # [n_nodes]


@dataclass
class ExampleContext:
    example: Example
    schema_ctx: SchemaContext
    features: np.ndarray              # [n_nodes * n_words, 7]
    gold: Optional[Derivation] = None


@dataclass
class EncoderOutput:
    h: Tensor       # [n_words, 2 * enc_hidden]
    l: Tensor       # [n_words, node_dim] linked-item summary with base embeddings
    l_phi: Tensor   # [n_words, node_dim] same with graph states
    h_aug: Tensor   # [n_words, 2 * enc_hidden + node_dim]


@dataclass
class RuleDistribution:
    actions: list[Action]
    p: Tensor
    s_glob: Optional[Tensor]
    s_loc: Optional[Tensor]
    s_att: Optional[Tensor]
    attention: Tensor
    context: Tensor


@dataclass
class DecodedHistory:
    steps: tuple[int, ...] = ()
    states: tuple[Tensor, ...] = ()
    items: tuple[int, ...] = ()

    def extended(self, step: int, state: Tensor, item: int) -> "DecodedHistory":
        return DecodedHistory(self.steps + (step,), self.states + (state,),
                              self.items + (item,))


@dataclass
class Forward:
    """Per-example tensors shared by every decode step."""
    schema_ctx: SchemaContext
    linking: LinkingMatrix
    rho: Tensor
    r: Tensor
    phi: Tensor
    enc: EncoderOutput
    att_keys: Tensor              # [n_words, dec_hidden]
    item_inputs: Tensor           # [n_nodes, node_dim] decoder input per item
    self_sim: Optional[Tensor]    # [n_nodes, n_nodes] F(phi) pairwise products


@dataclass
class BeamCandidate:
    derivation: Derivation
    logprob: float
    sql: str
    trace: tuple[int, ...]


@dataclass
class BeamOutcome:
    candidates: list[BeamCandidate]
    dropped: int = 0
    notes: list[str] = field(default_factory=list)


@dataclass
class _DecodeState:
    h: Tensor
    c: Tensor
    g: Tensor
    derivation: Derivation
    history: DecodedHistory
    logprob: float
    trace: tuple[int, ...]


class ParserModel:
    def __init__(self, cfg: RunConfig, grammar: Grammar, vocab: Vocab):
        self.cfg = cfg
        self.mode = ModelMode.from_config(cfg)
        self.grammar = grammar
        self.vocab = vocab
        self.store = ParamStore(np.random.default_rng(cfg.seed))
        self._schema_ctx: dict[str, SchemaContext] = {}
        self._register_params()

    def _register_params(self) -> None:
        cfg, store = self.cfg, self.store
        store.embedding("embed.word", len(self.vocab), cfg.word_dim)
        store.embedding("embed.type", len(TYPE_ORDER), cfg.node_dim)
        store.embedding("embed.rule", self.grammar.n_rules, cfg.node_dim)
        store.embedding("embed.bos", 1, cfg.node_dim)
        register_linking(store)
        store.matrix("node.w_r", cfg.node_dim, cfg.node_dim + 2 * cfg.word_dim)
        store.bias("node.b_r", cfg.node_dim)
        gnn.register_gnn(store, cfg.node_dim)
        register_birnn(store, "enc", cfg.word_dim + cfg.node_dim, cfg.enc_hidden)
        register_lstm(store, "dec", cfg.node_dim, cfg.dec_hidden)
        aug = 2 * cfg.enc_hidden + cfg.node_dim
        store.matrix("att.w", aug, cfg.dec_hidden)
        register_feed_forward(store, "ff", cfg.dec_hidden + aug, cfg.ff_hidden,
                              self.grammar.n_rules)
        store.matrix("selfatt.f.w", cfg.att_dim, cfg.node_dim)
        store.bias("selfatt.f.b", cfg.att_dim)

    # ------------------------------------------------------------------
    # contexts

    def schema_context(self, schema: Schema) -> SchemaContext:
        ctx = self._schema_ctx.get(schema.db_id)
        if ctx is None or ctx.schema is not schema:
            ctx = SchemaContext(
                schema=schema,
                graph=build_graph(schema),
                name_matrix=name_token_matrix(schema, self.vocab),
                type_index=np.array([TYPE_ORDER.index(schema.node_type(v))
                                     for v in range(schema.n_nodes)], dtype=np.intp),
            )
            self._schema_ctx[schema.db_id] = ctx
        return ctx

    def example_context(self, example: Example, schema: Schema,
                        with_gold: bool = True) -> ExampleContext:
        gold = None
        if with_gold:
            gold = sql_to_derivation(example.gold_sql, schema, self.grammar)
        return ExampleContext(
            example=example,
            schema_ctx=self.schema_context(schema),
            features=feature_tensor(example.question, schema),
            gold=gold,
        )

    # ------------------------------------------------------------------
    # encoding

    def encode(self, question: Question, schema: Schema, linking: LinkingMatrix,
               r: Tensor, phi: Tensor) -> EncoderOutput:
        """Run the bidirectional encoder over [word embedding ; l_i] inputs
        and augment its outputs with the graph-aware summaries."""
        store = self.store
        word_emb = ad.embedding_lookup(store["embed.word"],
                                       self.vocab.encode(question.tokens))
        p_t = ad.transpose(linking.p)          # [n_words, n_nodes]
        l = ad.matmul(p_t, r)
        l_phi = ad.matmul(p_t, phi)
        inputs = ad.concat([word_emb, l], axis=1)
        rows = [ad.narrow(inputs, 0, i, i + 1) for i in range(len(question.tokens))]
        vecs = [ad.reshape(row, (row.shape[1],)) for row in rows]
        states = birnn_encode(vecs, store, "enc", self.cfg.enc_hidden)
        h = ad.stack(states)
        h_aug = ad.concat([h, l_phi], axis=1)
        return EncoderOutput(h=h, l=l, l_phi=l_phi, h_aug=h_aug)

    def _relevance_for(self, ctx: ExampleContext, linking: LinkingMatrix) -> Tensor:
        if self.mode.relevance == "ones":
            return uniform_relevance(ctx.schema_ctx.schema).rho
        if self.mode.relevance == "oracle":
            return oracle_relevance(ctx.example.gold_sql, ctx.schema_ctx.schema).rho
        return relevance(linking).rho

    def forward_statics(self, ctx: ExampleContext) -> Forward:
        store = self.store
        schema = ctx.schema_ctx.schema
        name_means = ad.matmul(ad.constant(ctx.schema_ctx.name_matrix),
                               store["embed.word"])
        s = link_scores(ctx.example.question, schema, store, self.vocab,
                        features=ctx.features, name_means=name_means)
        linking = link_distribution(s, schema)
        rho = self._relevance_for(ctx, linking)
        r = gnn.base_embeddings(schema, ctx.schema_ctx.graph, store, self.vocab,
                                name_means=name_means)
        if self.mode.use_gnn:
            phi = gnn.run_gnn(ctx.schema_ctx.graph, r, rho, store, self.cfg.gnn_steps)
        else:
            phi = r
        enc_phi = phi if self.mode.phi_everywhere else r
        enc = self.encode(ctx.example.question, schema, linking, r, enc_phi)
        att_keys = ad.matmul(enc.h_aug, store["att.w"])
        if self.mode.phi_everywhere:
            item_inputs = phi
        else:
            item_inputs = ad.embedding_lookup(store["embed.type"],
                                              ctx.schema_ctx.type_index)
        self_sim = None
        if self.mode.self_attend:
            f = linear(phi, store, "selfatt.f")
            self_sim = ad.matmul(f, ad.transpose(f))
        return Forward(schema_ctx=ctx.schema_ctx, linking=linking, rho=rho, r=r,
                       phi=phi, enc=enc, att_keys=att_keys, item_inputs=item_inputs,
                       self_sim=self_sim)

    # ------------------------------------------------------------------
    # decoding

    def initial_state(self, fwd: Forward) -> _DecodeState:
        zeros = ad.constant(np.zeros(self.cfg.dec_hidden))
        bos = ad.reshape(self.store["embed.bos"], (self.cfg.node_dim,))
        return _DecodeState(h=zeros, c=zeros, g=bos,
                            derivation=Derivation.start(self.grammar),
                            history=DecodedHistory(), logprob=0.0, trace=())

    def decode_step(self, fwd: Forward, state: _DecodeState,
                    legal: Optional[LegalActions] = None
                    ) -> tuple[Tensor, Tensor, Tensor, RuleDistribution]:
        """One decoder step: returns (o, h, c, distribution over legal actions)."""
        store = self.store
        if legal is None:
            legal = legal_actions(state.derivation, fwd.schema_ctx.schema)
        if len(legal) == 0:
            raise AssertionError("decode_step: empty legal action set")
        h, c = lstm_cell(state.g, state.h, state.c, store, "dec")
        o = h
        scores = ad.matmul(fwd.att_keys, o)
        a = ad.softmax(scores)
        context = ad.matmul(ad.transpose(fwd.enc.h_aug), a)

        blocks = []
        s_glob = s_loc = s_att = None
        if legal.global_rules:
            all_rules = feed_forward(ad.concat([o, context]), store, "ff")
            s_glob = ad.gather(all_rules, list(legal.global_rules))
            blocks.append(s_glob)
        if legal.schema_items:
            rows = ad.gather(fwd.linking.s, list(legal.schema_items))
            s_loc = ad.matmul(rows, a)
            item_block = s_loc
            if self.mode.self_attend and state.history.items:
                u_hat = ad.stack(state.history.states)            # [k, dec]
                a_hat = ad.softmax(ad.matmul(u_hat, o))
                sim_rows = ad.gather(fwd.self_sim, list(state.history.items))
                sim = ad.gather(sim_rows, list(legal.schema_items), axis=1)
                s_att = ad.matmul(a_hat, sim)
                item_block = ad.add(s_loc, s_att)
            blocks.append(item_block)
        joint = blocks[0] if len(blocks) == 1 else ad.concat(blocks)
        p = ad.softmax(joint)
        dist = RuleDistribution(actions=legal.as_actions(), p=p, s_glob=s_glob,
                                s_loc=s_loc, s_att=s_att, attention=a, context=context)
        return o, h, c, dist

    def action_input(self, fwd: Forward, action: Action) -> Tensor:
        kind, idx = action
        if kind == "rule":
            row = ad.gather(self.store["embed.rule"], [idx])
        else:
            row = ad.gather(fwd.item_inputs, [idx])
        return ad.reshape(row, (self.cfg.node_dim,))

    def advance(self, fwd: Forward, state: _DecodeState, o: Tensor, h: Tensor, c: Tensor,
                action: Action, logp: float, local_index: int) -> _DecodeState:
        step = len(state.derivation.actions)
        history = state.history
        if action[0] == "item":
            history = history.extended(step, o, action[1])
        return _DecodeState(
            h=h, c=c, g=self.action_input(fwd, action),
            derivation=apply_rule(state.derivation, action, fwd.schema_ctx.schema),
            history=history, logprob=state.logprob + logp,
            trace=state.trace + (local_index,))

    # ------------------------------------------------------------------
    # training loss

    def loss(self, ctx: ExampleContext) -> Tensor:
        """Teacher-forced negative log-likelihood of the gold derivation."""
        if ctx.gold is None:
            raise ValueError("loss requires a gold derivation")
        fwd = self.forward_statics(ctx)
        state = self.initial_state(fwd)
        total = None
        for action in ctx.gold.actions:
            legal = legal_actions(state.derivation, fwd.schema_ctx.schema)
            o, h, c, dist = self.decode_step(fwd, state, legal)
            try:
                gold_idx = dist.actions.index(action)
            except ValueError:
                raise AssertionError(
                    f"gold action {action} is not legal at this step") from None
            term = ad.neg(ad.log(ad.pick(dist.p, gold_idx)))
            total = term if total is None else ad.add(total, term)
            state = self.advance(fwd, state, o, h, c, action,
                                 float(np.log(dist.p.data[gold_idx])), gold_idx)
        return total

    # ------------------------------------------------------------------
    # inference

    def beam_search(self, ctx: ExampleContext, beam_size: Optional[int] = None,
                    max_steps: Optional[int] = None, merge_greedy: bool = True
                    ) -> BeamOutcome:
        """Grammar-constrained beam search, candidates ranked by total
        log-probability with ties broken by earlier legal-action index."""
        beam_size = beam_size or self.cfg.beam_size
        max_steps = max_steps or self.cfg.max_decode_steps
        schema = ctx.schema_ctx.schema
        grammar = self.grammar
        with ad.no_grad():
            fwd = self.forward_statics(ctx)
            active = [self.initial_state(fwd)]
            finished: list[_DecodeState] = []
            dropped = 0
            notes: list[str] = []
            while active:
                expansions = []
                for cand in active:
                    # Only actions that can still complete within the step
                    # limit are selectable; scores stay the model's own
                    # probabilities over the full legal set.
                    budget = max_steps - len(cand.derivation.actions) - 1
                    rest_cost = grammar.frontier_completion_cost(
                        cand.derivation.frontier[1:])
                    o, h, c, dist = self.decode_step(fwd, cand)
                    with np.errstate(divide="ignore"):
                        logp = np.log(dist.p.data)
                    any_feasible = False
                    for i, action in enumerate(dist.actions):
                        extra = grammar.rule_completion_cost(action[1]) \
                            if action[0] == "rule" else 0
                        if rest_cost + extra > budget:
                            continue
                        any_feasible = True
                        expansions.append((cand.logprob + float(logp[i]),
                                           cand.trace + (i,), cand, o, h, c, action, i))
                    if not any_feasible:
                        dropped += 1
                        notes.append(
                            f"dropped candidate at step limit {max_steps} "
                            f"(logprob {cand.logprob:.3f})")
                expansions.sort(key=lambda e: (-e[0], e[1]))
                active = []
                for lp, trace, cand, o, h, c, action, i in expansions[:beam_size]:
                    nxt = self.advance(fwd, cand, o, h, c, action,
                                       lp - cand.logprob, i)
                    if nxt.derivation.complete:
                        finished.append(nxt)
                    else:
                        active.append(nxt)
            if merge_greedy and beam_size > 1:
                greedy = self.beam_search(ctx, beam_size=1, max_steps=max_steps,
                                          merge_greedy=False)
                for g in greedy.candidates:
                    if not any(f.derivation.actions == g.derivation.actions
                               for f in finished):
                        finished.append(_DecodeState(
                            h=None, c=None, g=None, derivation=g.derivation,
                            history=DecodedHistory(), logprob=g.logprob, trace=g.trace))
        finished.sort(key=lambda s: (-s.logprob, s.trace))
        candidates = [BeamCandidate(derivation=s.derivation, logprob=s.logprob,
                                    sql=derivation_to_sql(s.derivation, schema),
                                    trace=s.trace)
                      for s in finished]
        return BeamOutcome(candidates=candidates, dropped=dropped, notes=notes)

    def greedy(self, ctx: ExampleContext, max_steps: Optional[int] = None
               ) -> Optional[BeamCandidate]:
        outcome = self.beam_search(ctx, beam_size=1, max_steps=max_steps,
                                   merge_greedy=False)
        return outcome.candidates[0] if outcome.candidates else None
