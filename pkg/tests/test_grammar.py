import numpy as np
import pytest

from gnnsql.corpus import corpus_queries, corpus_schemas
from gnnsql.grammar import (COL_ANY_HEAD, COL_NUM_HEAD, TABLE_HEAD, Derivation, Grammar,
                            GrammarError, apply_rule, ast_to_derivation, derivation_to_sql,
                            legal_actions, random_derivation, sql_grammar, sql_to_derivation)
from gnnsql.schema import load_schema
from gnnsql.sqlast import (AmbiguousColumnError, OutOfGrammarError, UnknownSchemaItemError,
                           parse_sql, print_sql)

from test_schema_graph import FIG3_DOC, make_doc

GRAMMAR = sql_grammar()
SCHEMAS = corpus_schemas()
FIG3 = load_schema(FIG3_DOC)

TINY = load_schema(make_doc(
    [("t", [("a", "text", False), ("b", "text", False), ("n", "number", False)])], []))


def canonical(sql, schema):
    return print_sql(parse_sql(sql, schema))


class TestLegalActions:
    def test_start_state_offers_query_productions_only(self):
        d = Derivation.start(GRAMMAR)
        legal = legal_actions(d, TINY)
        assert legal.schema_items == ()
        assert set(legal.global_rules) == {r.id for r in GRAMMAR.by_lhs["query"]}

    def test_table_head_offers_all_tables(self):
        d = Derivation(grammar=GRAMMAR, actions=(), frontier=(TABLE_HEAD,))
        legal = legal_actions(d, SCHEMAS["university"])
        names = {SCHEMAS["university"].node_name(v) for v in legal.schema_items}
        assert names == {"student", "student_semester", "semester", "program"}
        assert legal.global_rules == ()

    def test_column_head_filters_by_type(self):
        schema = load_schema(make_doc(
            [("t", [("a", "text", False), ("b", "text", False), ("n", "number", False)])],
            []))
        d = Derivation(grammar=GRAMMAR, actions=(), frontier=(COL_NUM_HEAD,))
        legal = legal_actions(d, schema)
        assert [schema.node_name(v) for v in legal.schema_items] == ["n"]
        d2 = Derivation(grammar=GRAMMAR, actions=(), frontier=(COL_ANY_HEAD,))
        assert len(legal_actions(d2, schema).schema_items) == 3

    def test_sum_avg_rules_dropped_without_number_columns(self):
        schema = load_schema(make_doc([("t", [("a", "text", False)])], []))
        d = Derivation(grammar=GRAMMAR, actions=(), frontier=("agg",))
        legal = legal_actions(d, schema)
        kept = {GRAMMAR.rules[r].rhs[0] for r in legal.global_rules}
        assert kept == {"COUNT", "MIN", "MAX"}

    def test_complete_derivation_rejected(self):
        d = Derivation(grammar=GRAMMAR, actions=(), frontier=())
        with pytest.raises(GrammarError, match="complete"):
            legal_actions(d, TINY)


class TestApplyRule:
    def test_illegal_rule_rejected_with_context(self):
        d = Derivation.start(GRAMMAR)
        bad = GRAMMAR.by_lhs["cond"][0].id
        with pytest.raises(GrammarError, match="query"):
            apply_rule(d, ("rule", bad), TINY)

    def test_illegal_item_rejected(self):
        d = Derivation(grammar=GRAMMAR, actions=(), frontier=(COL_NUM_HEAD,))
        text_col_node = TINY.column_node(0)
        with pytest.raises(GrammarError):
            apply_rule(d, ("item", text_col_node), TINY)

    def test_single_completing_rule(self):
        d = Derivation(grammar=GRAMMAR, actions=(), frontier=("direction",))
        rule = GRAMMAR.rule_index[("direction", ("ASC",))]
        out = apply_rule(d, ("rule", rule), TINY)
        assert out.complete
        assert not d.complete  # persistent value, original untouched

    def test_gold_sequences_replay_end_to_end(self):
        for db_id, sql in corpus_queries()[:10]:
            schema = SCHEMAS[db_id]
            d = sql_to_derivation(sql, schema, GRAMMAR)
            replay = Derivation.start(GRAMMAR)
            for action in d.actions:
                replay = apply_rule(replay, action, schema)
            assert replay.complete
            assert replay.actions == d.actions


class TestRoundTrip:
    def test_whole_corpus_parses_and_is_a_fixpoint(self):
        queries = corpus_queries()
        assert len(queries) >= 50
        for db_id, sql in queries:
            schema = SCHEMAS[db_id]
            d = sql_to_derivation(sql, schema, GRAMMAR)
            printed = derivation_to_sql(d, schema)
            assert printed == canonical(sql, schema)
            d2 = sql_to_derivation(printed, schema, GRAMMAR)
            assert derivation_to_sql(d2, schema) == printed
            assert d2.actions == d.actions

    def test_simple_projection(self):
        schema = SCHEMAS["pets"]
        d = sql_to_derivation("SELECT age FROM student", schema, GRAMMAR)
        assert derivation_to_sql(d, schema) == "SELECT student.age FROM student"
        items = {schema.qualified_name(v) for k, v in d.actions if k == "item"}
        assert items == {"student", "student.age"}

    def test_not_in_subquery_canonical_form(self):
        schema = SCHEMAS["soccer"]
        d = sql_to_derivation(
            "SELECT name FROM team WHERE team_id NOT IN (SELECT team FROM match_season)",
            schema, GRAMMAR)
        assert derivation_to_sql(d, schema) == (
            "SELECT team.name FROM team WHERE team.team_id NOT IN "
            "( SELECT match_season.team FROM match_season )")

    def test_count_star_comparison(self):
        schema = SCHEMAS["cars"]
        d = sql_to_derivation(
            'SELECT count (*) FROM cars_data WHERE cars_data.cylinders > "value"',
            schema, GRAMMAR)
        assert derivation_to_sql(d, schema) == (
            "SELECT COUNT ( * ) FROM cars_data WHERE cars_data.cylinders > 'value'")

    def test_incomplete_derivation_cannot_print(self):
        d = Derivation.start(GRAMMAR)
        with pytest.raises(GrammarError, match="incomplete"):
            derivation_to_sql(d, TINY)


class TestParserErrors:
    def test_malformed_sql_is_out_of_grammar(self):
        with pytest.raises(OutOfGrammarError):
            sql_to_derivation("SELECT FROM WHERE", TINY, GRAMMAR)

    def test_unknown_column(self):
        with pytest.raises(UnknownSchemaItemError, match="nope"):
            sql_to_derivation("SELECT nope FROM t", TINY, GRAMMAR)

    def test_unknown_table(self):
        with pytest.raises(UnknownSchemaItemError, match="missing"):
            sql_to_derivation("SELECT a FROM missing", TINY, GRAMMAR)

    def test_unsupported_construct_reports_not_crashes(self):
        with pytest.raises(OutOfGrammarError, match="select-star"):
            sql_to_derivation("SELECT * FROM t", TINY, GRAMMAR)

    def test_sum_over_text_column_out_of_grammar(self):
        with pytest.raises(OutOfGrammarError, match="aggregate-type"):
            sql_to_derivation("SELECT sum ( t.a ) FROM t", TINY, GRAMMAR)

    def test_ambiguous_bare_column_lists_candidates(self):
        schema = load_schema(make_doc(
            [("a", [("x", "text", False), ("k", "number", False)]),
             ("b", [("x", "text", False), ("j", "number", True)])], [[1, 3]]))
        with pytest.raises(AmbiguousColumnError, match="a.x.*b.x"):
            parse_sql("SELECT x FROM a JOIN b ON a.k = b.j", schema)

    def test_undefined_alias(self):
        with pytest.raises(UnknownSchemaItemError, match="t9"):
            parse_sql("SELECT T9.a FROM t", TINY)


class TestRollouts:
    def test_rollouts_all_print_to_parseable_sql(self):
        rng = np.random.default_rng(0)
        schema = SCHEMAS["university"]
        for _ in range(150):
            d = random_derivation(GRAMMAR, schema, rng)
            sql = derivation_to_sql(d, schema)
            d2 = sql_to_derivation(sql, schema, GRAMMAR)
            assert derivation_to_sql(d2, schema) == sql

    def test_rollouts_on_schema_without_number_columns(self):
        schema = load_schema(make_doc(
            [("a", [("x", "text", False)]), ("b", [("y", "text", False)])], []))
        rng = np.random.default_rng(1)
        for _ in range(50):
            d = random_derivation(GRAMMAR, schema, rng)
            sql = derivation_to_sql(d, schema)
            parse_sql(sql, schema)

    def test_legal_action_ordering_is_stable(self):
        rng = np.random.default_rng(2)
        schema = SCHEMAS["pets"]
        d = Derivation.start(GRAMMAR)
        while not d.complete:
            legal_a = legal_actions(d, schema)
            legal_b = legal_actions(d, schema)
            assert legal_a == legal_b
            options = legal_a.as_actions()
            d = apply_rule(d, options[int(rng.integers(len(options)))], schema)


class TestToyGrammars:
    def test_custom_grammar_with_single_derivation(self):
        g = Grammar([("query", ("SELECT", "thing")), ("thing", ("*",))])
        d = Derivation.start(g)
        legal = legal_actions(d, TINY)
        assert len(legal) == 1
        d = apply_rule(d, ("rule", 0), TINY)
        d = apply_rule(d, ("rule", 1), TINY)
        assert d.complete
        assert derivation_to_sql(d, TINY) == "SELECT *"

    def test_grammar_requires_productions(self):
        with pytest.raises(GrammarError, match="no productions"):
            Grammar([("query", ("SELECT", "ghost_nt"))], start="query")
        # an undefined symbol is only a nonterminal if some rule defines it,
        # so it must be spelled like one used elsewhere
