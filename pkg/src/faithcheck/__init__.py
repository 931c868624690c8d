"""Citation verification and dual-agent evaluation of LLM-generated Islamic essays."""
__version__ = "0.1.0"
