"""Multilingual service discovery.

Publish service descriptors in any language, keep per-language ontology
portions aligned across languages, and answer keyword queries with services
described in every registered language, ranked by field-weighted tf-idf
scaled by translation confidence.
"""

__version__ = "0.1.0"
