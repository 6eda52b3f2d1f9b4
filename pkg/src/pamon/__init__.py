"""Purpose-aware policy engine.

Compiles declarative workflow purposes into symbolic automata, decides
offline whether a purpose is achievable at all under the current
authorization facts, and enforces purposes online with a four-valued
runtime monitor that grants or denies individual requests.
"""

__version__ = "0.1.0"
