"""Staged LLM software generation with human review gates.

The pipeline drafts use cases from a task statement, lets a human revise and
approve them, derives a file-level design, generates the code, then drives
bounded automatic test-and-fix loops before handing the result back for
manual validation.
"""

__version__ = "0.1.0"
