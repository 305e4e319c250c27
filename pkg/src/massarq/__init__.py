"""Joint acknowledgment feedback for massive random access.

Modules: ``gf`` (GF(2^b) arithmetic), ``hashing``, ``codec`` (the five
feedback encoders), ``bounds``, ``arq`` (L-round reliability and fading),
``sim`` (Monte-Carlo validation) and ``cli``.
"""
__version__ = "0.1.0"
