"""codewright: an action-orchestrating software-engineering agent engine
with a unified repository-task benchmark harness."""

__version__ = "0.1.0"
