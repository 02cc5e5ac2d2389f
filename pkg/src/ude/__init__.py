"""Universal debiased editing: learn one shared noise image that hides a
sensitive attribute from a frozen embedding encoder while keeping the
embeddings useful for disease classification.

Subpackages follow the pipeline stages: synthetic data (`datagen`), the
frozen encoder and linear heads (`models`), the capability-tagged encoder
boundary (`oracle`), white-box edit learning (`editing`), black-box greedy
zeroth-order edit learning (`gezo`), fairness metrics (`fairness`), and
orchestration (`pipeline`, `cli`).
"""

__version__ = "0.1.0"
