"""Federated BGP query optimization over characteristic-set statistics.

Pipeline: parse N-Triples datasets, build per-dataset characteristic
set/pair statistics and entity synopses, link datasets through federated
characteristic pairs, then select sources, order joins, decompose the plan
into per-endpoint subqueries, and execute it against simulated endpoints.
"""

__version__ = "0.1.0"
