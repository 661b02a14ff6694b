"""seqxrec: sequence-aware explanation generation for recommenders, with
utility-based evaluation of the generated explanations."""

__version__ = "0.1.0"
