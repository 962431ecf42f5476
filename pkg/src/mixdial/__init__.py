"""Mixed-type dialog modelling framework.

A single conversation session here weaves together chitchat, question
answering, knowledge-grounded dialog and task-oriented dialog over one
unified state/act schema.  The package provides:

* ``mixdial.schema``    -- the unified dialog state and dialog act schema,
  with delta accumulation, diffing, flattening and validation.
* ``mixdial.corpus``    -- a seeded synthetic knowledge base, template
  enumerator and dialog simulator producing fully annotated sessions.
* ``mixdial.linearize`` -- token-sequence grammar: prompts, state/act
  (de)serialization, delexicalization and task input formatting.
* ``mixdial.model``     -- a small decoder-only sequence model whose input
  embedding sums token, position, dialog-type, task and domain rows, with
  the two-stage prompt-then-finetune training schedule.
* ``mixdial.tasks``     -- the DST / DAP / RG / E2E benchmark pipelines.
* ``mixdial.metrics``   -- joint/slot/act accuracy, BLEU, METEOR, CIDEr,
  Distinct, hallucination accuracy and dialog success.
* ``mixdial.cli``       -- the ``mixdial`` command line tool.
"""

__version__ = "0.1.0"
