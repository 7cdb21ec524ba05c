"""fluentnet: event-driven activity recognition over a network of
lightweight knowledge contexts.

The package splits into the statement algebra (:mod:`fluentnet.statements`),
knowledge contexts (:mod:`fluentnet.context`), the rule engine
(:mod:`fluentnet.rules`), the fluent-model language (:mod:`fluentnet.dsl`),
the scheduling network (:mod:`fluentnet.network`), the replay procedures
(:mod:`fluentnet.procedures`), dataset ingestion (:mod:`fluentnet.ingest`)
and scoring/reporting (:mod:`fluentnet.metrics`).  ``fluentnet.cli`` wires
them into the command line.
"""

__version__ = "0.1.0"
