"""Validation rules, the predicate evaluator, statistics and the semantic judge."""
